#pragma once

#include <stdexcept>
#include <string>

namespace fedrlhf {

/// Invalid argument passed to an operation (dimension mismatch, empty input,
/// out-of-range scalar, non-finite value where finiteness is required).
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical failure during a computation (non-finite intermediate, divergence).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// KL(p || q) with p_i > 0 where q_i = 0.
class InfiniteDivergenceError : public NumericalError {
public:
    explicit InfiniteDivergenceError(const std::string& what) : NumericalError(what) {}
};

/// Rank correlation requested on a sequence with zero rank variance.
class UndefinedCorrelationError : public NumericalError {
public:
    explicit UndefinedCorrelationError(const std::string& what) : NumericalError(what) {}
};

/// Malformed wire frame or violated federation protocol contract.
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// Experiment configuration failed schema validation. `field` holds the
/// dotted path of the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field_path, const std::string& what)
        : std::runtime_error(field_path + ": " + what), field(std::move(field_path)) {}
    std::string field;
};

}  // namespace fedrlhf
