#include "fedrlhf/rng.hpp"

#include <cmath>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

std::uint64_t RngStream::next_below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("next_below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double RngStream::next_gaussian() {
    // Box-Muller without caching the second value: draws stay a pure
    // function of the counter position.
    const double u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * M_PI * u2);
}

int RngStream::next_index(const double* probs, int n) {
    if (n <= 0) throw ArgumentError("next_index: empty support");
    const double u = next_double();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return n - 1;  // guard against acc summing to slightly under 1
}

}  // namespace fedrlhf
