#pragma once

#include <span>
#include <vector>

namespace fedrlhf {

/**
 * A probability distribution over a finite support: entries are non-negative
 * and sum to 1 within 1e-12 absolute tolerance. Construction validates both
 * invariants.
 */
class Distribution {
public:
    static constexpr double kSumTolerance = 1e-12;

    explicit Distribution(std::vector<double> probs);

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const { return probs_; }
    const double* data() const { return probs_.data(); }

private:
    std::vector<double> probs_;
};

/// Numerically stable softmax (max logit subtracted before exponentiation).
Distribution softmax(std::span<const double> logits);

/// KL divergence sum_i p_i ln(p_i / q_i), with 0 * ln(0/q) = 0.
/// Throws InfiniteDivergenceError when p_i > 0 and q_i = 0.
double kl_divergence(const Distribution& p, const Distribution& q);

}  // namespace fedrlhf
