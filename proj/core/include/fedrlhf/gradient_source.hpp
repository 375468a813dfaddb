#pragma once

#include <cstdint>

#include "fedrlhf/parameter_vector.hpp"
#include "fedrlhf/rng.hpp"

namespace fedrlhf {

/**
 * Anything that can produce a stochastic ascent gradient for one client's
 * (possibly shaped) objective. Implementations: the REINFORCE estimator over
 * an MDP, and the quadratic family's exact gradient with optional clipping
 * and injected noise used by the bound-validation harness.
 */
class GradientSource {
public:
    virtual ~GradientSource() = default;

    /// Returns g_hat(theta). Adds the number of environment samples this
    /// estimate consumed to `n_samples`.
    virtual ParameterVector estimate(const ParameterVector& theta, RngStream& rng,
                                     std::int64_t& n_samples) = 0;

    virtual std::size_t dim() const = 0;
};

}  // namespace fedrlhf
