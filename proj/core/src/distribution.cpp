#include "fedrlhf/distribution.hpp"

#include <algorithm>
#include <cmath>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ArgumentError("Distribution: empty support");
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p)) throw ArgumentError("Distribution: non-finite entry");
        if (p < 0.0) throw ArgumentError("Distribution: negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw ArgumentError("Distribution: entries sum to " + std::to_string(sum));
    }
}

Distribution softmax(std::span<const double> logits) {
    if (logits.empty()) throw ArgumentError("softmax: empty input");
    for (double x : logits) {
        if (!std::isfinite(x)) throw ArgumentError("softmax: non-finite logit");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - max_logit);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return Distribution(std::move(probs));
}

double kl_divergence(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw ArgumentError("kl_divergence: support size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) {
            throw InfiniteDivergenceError("kl_divergence: p_i > 0 where q_i = 0 at index " +
                                          std::to_string(i));
        }
        acc += p[i] * std::log(p[i] / q[i]);
    }
    // Gibbs: exact result is >= 0; permit only rounding-level negatives.
    return acc < 0.0 && acc > -1e-15 ? 0.0 : acc;
}

}  // namespace fedrlhf
