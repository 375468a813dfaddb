#include "fedrlhf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

std::vector<double> mid_ranks(std::span<const double> xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        // positions i..j (0-based) share the average 1-based rank
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ArgumentError("pearson: length mismatch");
    if (xs.size() < 2) throw ArgumentError("pearson: need at least 2 points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedCorrelationError("pearson: zero variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

double spearman_rank_correlation(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ArgumentError("spearman: length mismatch");
    if (xs.size() < 2) throw ArgumentError("spearman: need at least 2 points");
    const std::vector<double> rx = mid_ranks(xs);
    const std::vector<double> ry = mid_ranks(ys);
    try {
        return pearson_correlation(rx, ry);
    } catch (const UndefinedCorrelationError&) {
        throw UndefinedCorrelationError("spearman: zero rank variance");
    }
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ArgumentError("linear_fit: length mismatch");
    if (xs.size() < 2) throw ArgumentError("linear_fit: need at least 2 points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw ArgumentError("linear_fit: zero variance in x");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy == 0.0) {
        fit.r_squared = 1.0;  // constant y reproduced exactly by slope 0
    } else {
        double ss_res = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double e = ys[i] - (fit.slope * xs[i] + fit.intercept);
            ss_res += e * e;
        }
        fit.r_squared = 1.0 - ss_res / syy;
    }
    return fit;
}

MeanWithError mean_with_error(std::span<const double> xs) {
    MeanWithError out;
    out.count = xs.size();
    if (xs.empty()) return out;
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    out.mean = m;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m) * (x - m);
        const double var = ss / static_cast<double>(xs.size() - 1);
        out.std_error = std::sqrt(var / static_cast<double>(xs.size()));
    }
    return out;
}

}  // namespace fedrlhf
