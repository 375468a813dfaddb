#pragma once

#include <span>
#include <vector>

namespace fedrlhf {

/// Fractional (mid) ranks, 1-based; ties receive the average of the ranks
/// they would occupy.
std::vector<double> mid_ranks(std::span<const double> xs);

/// Pearson correlation. Throws UndefinedCorrelationError on zero variance.
double pearson_correlation(std::span<const double> xs, std::span<const double> ys);

/// Spearman rank correlation: Pearson correlation of mid ranks.
/// Throws ArgumentError on length mismatch or length < 2, and
/// UndefinedCorrelationError when either rank sequence has zero variance.
double spearman_rank_correlation(std::span<const double> xs, std::span<const double> ys);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

/// Mean and standard error of the mean.
struct MeanWithError {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};
MeanWithError mean_with_error(std::span<const double> xs);

}  // namespace fedrlhf
