#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedrlhf/parameter_vector.hpp"
#include "fedrlhf/rng.hpp"
#include "fedrlhf/stats.hpp"

namespace fedrlhf {

/**
 * Every constant the convergence and trade-off statements consume:
 * L-smoothness, gradient bound G, gradient variance sigma^2, second moment
 * M^2, PL constant mu, feedback bound H_max with weight lambda, discount
 * gamma, reward bound R_max, run shape (K clients, T rounds, tau local
 * steps, learning rate eta) and the objective anchors J* and J_0.
 *
 * M^2 is carried because the assumption set names it, but no stated bound
 * formula consumes it; validate() only checks M^2 >= sigma^2.
 */
struct BoundConstants {
    double l = 1.0;
    double g = 0.0;
    double sigma2 = 0.0;
    double m2 = 0.0;
    double mu = 1.0;
    double h_max = 0.0;
    double lambda = 0.0;
    double gamma = 0.9;
    double r_max = 0.0;
    int k = 1;
    int t = 1;
    int tau = 1;
    double eta = 1.0;
    double j_star = 0.0;
    double j0 = 0.0;

    void validate() const;
    /// eta == 1/(L tau) within floating tolerance; the convergence statement
    /// assumes this learning rate.
    bool eta_matches_theory(double rel_tol = 1e-9) const;

    std::string to_json() const;
    static BoundConstants from_json(const std::string& text);
};

/// The three terms of the convergence bound and their sum.
struct ConvergenceBound {
    double eps_t;    // (L / (mu T)) (J* - J0)
    double eps_v;    // (G^2 + sigma^2) / (2 mu K)
    double eps_h;    // (L / mu) lambda H_max
    double total;
    bool eta_matches_theory;
};

ConvergenceBound convergence_bound_terms(const BoundConstants& c);

/// Total suboptimality bound on E[J(theta*) - J(theta_avg)].
double convergence_bound(const BoundConstants& c);

/**
 * Sample-complexity outputs from the equal three-way error-budget split:
 *   T_min = 3 L (J* - J0) / (mu eps),
 *   K_min = 3 (G^2 + sigma^2) / (2 mu eps),
 *   lambda_hmax_cap = mu eps / (3 L),
 *   N = K_min * T_min = 9 L (J* - J0)(G^2 + sigma^2) / (2 mu^2 eps^2).
 * t_min/k_min are the raw real-valued requirements; k_min_effective clamps
 * to 1 (k_min_clamped flags when that happened).
 */
struct SampleComplexity {
    double t_min;
    double k_min;
    double lambda_hmax_cap;
    double n_total;
    double k_min_effective;
    bool k_min_clamped;
};

SampleComplexity sample_complexity(const BoundConstants& c, double epsilon);

/// Contraction factor rho = 1 - mu/L of the per-round recursion at eta = 1/(L tau).
double contraction_factor(const BoundConstants& c);

/// Inputs of the personalization-performance trade-off bound.
struct TradeoffInputs {
    std::vector<double> client_j0;          // J_k^0(pi_k), one per client
    std::vector<double> personalization;    // P_k(theta) >= 0, one per client
    double r_total_max = 0.0;               // R_max + lambda H_max
    double gamma = 0.9;
};

/// C = 2 sqrt(2) R_total,max / (1 - gamma)^2.
double tradeoff_constant(double r_total_max, double gamma);

/// (1/K) sum J_k^0(pi_k) - C (1/K) sum sqrt(P_k).
double tradeoff_lower_bound(const TradeoffInputs& inputs);

/**
 * Objective adapter the constant estimators sample through. Clients are the
 * per-client objectives J_k; gradient() is the exact global gradient.
 */
class ObjectiveHandle {
public:
    virtual ~ObjectiveHandle() = default;
    virtual std::size_t dim() const = 0;
    virtual int n_clients() const = 0;
    virtual ParameterVector gradient(const ParameterVector& theta) const = 0;
    virtual ParameterVector client_gradient(int k, const ParameterVector& theta) const = 0;
    virtual ParameterVector stochastic_gradient(int k, const ParameterVector& theta,
                                                RngStream& rng) const = 0;
    virtual double value(const ParameterVector& theta) const = 0;
    virtual std::optional<double> optimal_value() const = 0;
};

/**
 * Empirical assumption constants. All are sampled extrema, not certified:
 * l_hat and g_hat are lower bounds on the true suprema, mu_hat is an upper
 * bound on the true infimum, and sigma2_hat is a point estimate of the worst
 * sampled per-point variance.
 */
struct EstimatedConstants {
    double l_hat = 0.0;
    double g_hat = 0.0;
    double sigma2_hat = 0.0;
    std::optional<double> mu_hat;
    bool sampled_not_certified = true;
};

struct EstimateOptions {
    int n_probe_points = 64;        // random sample points
    int n_refine_iters = 200;       // curvature-direction refinement steps
    int n_variance_draws = 1000;    // stochastic draws per variance probe
    double probe_radius = 2.0;      // sampling radius around the origin
};

/// Throws ArgumentError when mu_hat is requested implicitly but the handle
/// has no known optimal value (mu_hat is simply absent in that case).
EstimatedConstants estimate_constants(const ObjectiveHandle& objective, const EstimateOptions& opts,
                                      RngStream& rng);

/// One lambda grid point of a sweep, as consumed by rate_regression.
struct SweepRow {
    double lambda;
    double mean_personalization;  // mean_k P_k
    double global_performance;    // J_g
    double samples_to_eps;        // environment samples until the eps target
};

/**
 * Rates from a lambda sweep: log-log slope of mean P_k vs lambda (expected
 * near 2), linear fit of J_g vs lambda (expected negative slope) and linear
 * fit of samples-to-eps vs lambda. Needs >= 5 points spanning at least one
 * decade of lambda.
 */
struct RateRegression {
    LinearFit personalization_loglog;
    LinearFit global_performance_linear;
    LinearFit samples_linear;
};

RateRegression rate_regression(std::span<const SweepRow> rows);

}  // namespace fedrlhf
