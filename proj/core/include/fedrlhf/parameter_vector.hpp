#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

/**
 * Policy parameters theta: a dense vector of 64-bit reals whose dimension is
 * fixed for the lifetime of a federation run. All mutating operations keep
 * the entries finite; ensure_finite() is asserted after every local update
 * and every server aggregation.
 */
class ParameterVector {
public:
    ParameterVector() = default;
    explicit ParameterVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
    explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t dim() const { return values_.size(); }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool operator==(const ParameterVector& other) const { return values_ == other.values_; }

    void ensure_finite(const char* context = "ParameterVector") const {
        for (double v : values_) {
            if (!std::isfinite(v)) {
                throw NumericalError(std::string(context) + ": non-finite entry");
            }
        }
    }

    void check_same_dim(const ParameterVector& other, const char* context) const {
        if (dim() != other.dim()) {
            throw ArgumentError(std::string(context) + ": dimension mismatch (" +
                                std::to_string(dim()) + " vs " + std::to_string(other.dim()) + ")");
        }
    }

    ParameterVector& operator+=(const ParameterVector& other) {
        check_same_dim(other, "operator+=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
        return *this;
    }

    ParameterVector& operator-=(const ParameterVector& other) {
        check_same_dim(other, "operator-=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
        return *this;
    }

    ParameterVector& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }

    /// this += s * other
    void axpy(double s, const ParameterVector& other) {
        check_same_dim(other, "axpy");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * other.values_[i];
    }

    double dot(const ParameterVector& other) const {
        check_same_dim(other, "dot");
        double acc = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) acc += values_[i] * other.values_[i];
        return acc;
    }

    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }

    /// Rescales in place so that the Euclidean norm is at most max_norm.
    void clip_norm(double max_norm) {
        if (max_norm <= 0.0) throw ArgumentError("clip_norm: max_norm must be positive");
        const double n = norm();
        if (n > max_norm) *this *= max_norm / n;
    }

private:
    std::vector<double> values_;
};

inline ParameterVector operator+(ParameterVector a, const ParameterVector& b) { return a += b; }
inline ParameterVector operator-(ParameterVector a, const ParameterVector& b) { return a -= b; }
inline ParameterVector operator*(double s, ParameterVector a) { return a *= s; }

/// Bit-level equality (distinguishes -0.0 from 0.0, unlike operator==).
bool bitwise_equal(const ParameterVector& a, const ParameterVector& b);

}  // namespace fedrlhf
