#include "fedrlhf/theory.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

void BoundConstants::validate() const {
    if (!(mu > 0.0)) throw ArgumentError("BoundConstants: mu must be > 0");
    if (l < mu) throw ArgumentError("BoundConstants: L must be >= mu");
    if (g < 0.0 || sigma2 < 0.0 || m2 < 0.0 || h_max < 0.0) {
        throw ArgumentError("BoundConstants: G, sigma2, M2, h_max must be >= 0");
    }
    if (m2 > 0.0 && m2 < sigma2) {
        throw ArgumentError("BoundConstants: M2 must dominate sigma2");
    }
    if (lambda < 0.0) throw ArgumentError("BoundConstants: lambda must be >= 0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("BoundConstants: gamma in [0, 1)");
    if (r_max < 0.0) throw ArgumentError("BoundConstants: r_max must be >= 0");
    if (k < 1 || t < 1 || tau < 1) throw ArgumentError("BoundConstants: K, T, tau must be >= 1");
    if (!(eta > 0.0)) throw ArgumentError("BoundConstants: eta must be > 0");
    if (j_star < j0) throw ArgumentError("BoundConstants: J* must be >= J0");
}

bool BoundConstants::eta_matches_theory(double rel_tol) const {
    const double theory = 1.0 / (l * static_cast<double>(tau));
    return std::abs(eta - theory) <= rel_tol * theory;
}

std::string BoundConstants::to_json() const {
    nlohmann::json j;
    j["L"] = l;
    j["G"] = g;
    j["sigma2"] = sigma2;
    j["M2"] = m2;
    j["mu"] = mu;
    j["h_max"] = h_max;
    j["lambda"] = lambda;
    j["gamma"] = gamma;
    j["r_max"] = r_max;
    j["K"] = k;
    j["T"] = t;
    j["tau"] = tau;
    j["eta"] = eta;
    j["j_star"] = j_star;
    j["j0"] = j0;
    return j.dump();
}

BoundConstants BoundConstants::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ArgumentError(std::string("constants JSON: ") + e.what());
    }
    BoundConstants c;
    auto get = [&](const char* key, auto& out, bool required) {
        if (j.contains(key)) {
            j.at(key).get_to(out);
        } else if (required) {
            throw ArgumentError(std::string("constants JSON: missing field '") + key + "'");
        }
    };
    get("L", c.l, true);
    get("G", c.g, true);
    get("sigma2", c.sigma2, true);
    get("M2", c.m2, false);
    get("mu", c.mu, true);
    get("h_max", c.h_max, false);
    get("lambda", c.lambda, false);
    get("gamma", c.gamma, false);
    get("r_max", c.r_max, false);
    get("K", c.k, true);
    get("T", c.t, true);
    get("tau", c.tau, true);
    get("j_star", c.j_star, true);
    get("j0", c.j0, true);
    if (j.contains("eta")) {
        j.at("eta").get_to(c.eta);
    } else {
        c.eta = 1.0 / (c.l * static_cast<double>(c.tau));
    }
    c.validate();
    return c;
}

ConvergenceBound convergence_bound_terms(const BoundConstants& c) {
    c.validate();
    ConvergenceBound b;
    b.eps_t = (c.l / (c.mu * static_cast<double>(c.t))) * (c.j_star - c.j0);
    b.eps_v = (c.g * c.g + c.sigma2) / (2.0 * c.mu * static_cast<double>(c.k));
    b.eps_h = (c.l / c.mu) * c.lambda * c.h_max;
    b.total = b.eps_t + b.eps_v + b.eps_h;
    b.eta_matches_theory = c.eta_matches_theory();
    return b;
}

double convergence_bound(const BoundConstants& c) { return convergence_bound_terms(c).total; }

SampleComplexity sample_complexity(const BoundConstants& c, double epsilon) {
    c.validate();
    if (!(epsilon > 0.0)) throw ArgumentError("sample_complexity: epsilon must be > 0");
    SampleComplexity out;
    out.t_min = 3.0 * c.l * (c.j_star - c.j0) / (c.mu * epsilon);
    out.k_min = 3.0 * (c.g * c.g + c.sigma2) / (2.0 * c.mu * epsilon);
    out.lambda_hmax_cap = c.mu * epsilon / (3.0 * c.l);
    out.n_total = out.k_min * out.t_min;
    out.k_min_clamped = out.k_min < 1.0;
    out.k_min_effective = out.k_min_clamped ? 1.0 : out.k_min;
    return out;
}

double contraction_factor(const BoundConstants& c) {
    c.validate();
    return 1.0 - c.mu / c.l;
}

double tradeoff_constant(double r_total_max, double gamma) {
    if (r_total_max < 0.0) throw ArgumentError("tradeoff: r_total_max must be >= 0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("tradeoff: gamma must be in [0, 1)");
    return 2.0 * std::sqrt(2.0) * r_total_max / ((1.0 - gamma) * (1.0 - gamma));
}

double tradeoff_lower_bound(const TradeoffInputs& inputs) {
    if (inputs.client_j0.empty() || inputs.client_j0.size() != inputs.personalization.size()) {
        throw ArgumentError("tradeoff: need matching non-empty J0 and P_k lists");
    }
    const double c = tradeoff_constant(inputs.r_total_max, inputs.gamma);
    double mean_j0 = 0.0;
    double mean_sqrt_p = 0.0;
    for (std::size_t k = 0; k < inputs.client_j0.size(); ++k) {
        if (inputs.personalization[k] < 0.0) {
            throw ArgumentError("tradeoff: P_k must be >= 0");
        }
        mean_j0 += inputs.client_j0[k];
        mean_sqrt_p += std::sqrt(inputs.personalization[k]);
    }
    const double n = static_cast<double>(inputs.client_j0.size());
    return mean_j0 / n - c * (mean_sqrt_p / n);
}

// ---------------------------------------------------------------------------
// Empirical constant estimation
// ---------------------------------------------------------------------------

namespace {

ParameterVector random_point(std::size_t dim, double radius, RngStream& rng) {
    ParameterVector p(dim);
    for (std::size_t i = 0; i < dim; ++i) p[i] = radius * rng.next_gaussian();
    return p;
}

ParameterVector random_direction(std::size_t dim, RngStream& rng) {
    ParameterVector d(dim);
    double n = 0.0;
    while (n < 1e-12) {
        for (std::size_t i = 0; i < dim; ++i) d[i] = rng.next_gaussian();
        n = d.norm();
    }
    d *= 1.0 / n;
    return d;
}

}  // namespace

EstimatedConstants estimate_constants(const ObjectiveHandle& objective,
                                      const EstimateOptions& opts, RngStream& rng) {
    if (opts.n_probe_points < 2) throw ArgumentError("estimate_constants: need >= 2 probe points");
    const std::size_t dim = objective.dim();
    EstimatedConstants est;

    const std::optional<double> j_star = objective.optimal_value();

    std::vector<ParameterVector> points;
    points.reserve(static_cast<std::size_t>(opts.n_probe_points));
    for (int i = 0; i < opts.n_probe_points; ++i) {
        points.push_back(random_point(dim, opts.probe_radius, rng));
    }

    // G_hat: largest sampled per-client gradient norm.
    for (const auto& p : points) {
        for (int k = 0; k < objective.n_clients(); ++k) {
            est.g_hat = std::max(est.g_hat, objective.client_gradient(k, p).norm());
        }
    }

    // L_hat over random pairs, then refined by power-iteration-style pairs:
    // the difference quotient along u equals ||A u|| for quadratic objectives
    // and approaches the largest curvature as u aligns with it.
    const double h = 1e-4 * std::max(1.0, opts.probe_radius);
    auto pair_ratio = [&](const ParameterVector& base, const ParameterVector& unit_dir) {
        ParameterVector shifted = base;
        shifted.axpy(h, unit_dir);
        ParameterVector diff = objective.gradient(shifted) - objective.gradient(base);
        return diff.norm() / h;
    };
    const ParameterVector base = points.front();
    for (int i = 0; i + 1 < opts.n_probe_points; i += 2) {
        ParameterVector d = points[static_cast<std::size_t>(i)] -
                            points[static_cast<std::size_t>(i) + 1];
        const double n = d.norm();
        if (n < 1e-12) continue;
        d *= 1.0 / n;
        est.l_hat = std::max(est.l_hat, pair_ratio(base, d));
    }
    ParameterVector u = random_direction(dim, rng);
    for (int it = 0; it < opts.n_refine_iters; ++it) {
        ParameterVector shifted = base;
        shifted.axpy(h, u);
        ParameterVector curv = objective.gradient(base) - objective.gradient(shifted);
        curv *= 1.0 / h;  // ~ A u for concave quadratics
        const double n = curv.norm();
        if (n < 1e-12) break;
        est.l_hat = std::max(est.l_hat, n);
        curv *= 1.0 / n;
        u = curv;
    }

    // sigma^2_hat: worst sampled per-point variance of the stochastic estimator.
    if (opts.n_variance_draws > 1) {
        const int n_var_points = std::min(opts.n_probe_points, 8);
        for (int i = 0; i < n_var_points; ++i) {
            const ParameterVector& p = points[static_cast<std::size_t>(i)];
            const int k = i % objective.n_clients();
            std::vector<ParameterVector> draws;
            draws.reserve(static_cast<std::size_t>(opts.n_variance_draws));
            ParameterVector mean(dim);
            for (int d = 0; d < opts.n_variance_draws; ++d) {
                draws.push_back(objective.stochastic_gradient(k, p, rng));
                mean += draws.back();
            }
            mean *= 1.0 / opts.n_variance_draws;
            double ss = 0.0;
            for (const auto& g : draws) ss += (g - mean).squared_norm();
            est.sigma2_hat = std::max(est.sigma2_hat, ss / (opts.n_variance_draws - 1));
        }
    }

    // mu_hat: smallest sampled PL ratio ||grad J||^2 / (2 (J* - J)), refined
    // by a crude direction search that walks toward smaller ratios.
    if (j_star) {
        double best = std::numeric_limits<double>::infinity();
        auto ratio_at = [&](const ParameterVector& p) {
            const double gap = *j_star - objective.value(p);
            if (gap <= 1e-12) return std::numeric_limits<double>::infinity();
            return objective.gradient(p).squared_norm() / (2.0 * gap);
        };
        ParameterVector cursor = points.front();
        for (const auto& p : points) {
            const double r = ratio_at(p);
            if (r < best) {
                best = r;
                cursor = p;
            }
        }
        double step = 0.5 * opts.probe_radius;
        for (int it = 0; it < opts.n_refine_iters; ++it) {
            const ParameterVector d = random_direction(dim, rng);
            bool improved = false;
            for (double sign : {1.0, -1.0}) {
                ParameterVector candidate = cursor;
                candidate.axpy(sign * step, d);
                const double r = ratio_at(candidate);
                if (r < best) {
                    best = r;
                    cursor = candidate;
                    improved = true;
                }
            }
            if (!improved) step *= 0.95;
        }
        if (std::isfinite(best)) est.mu_hat = best;
    }

    return est;
}

RateRegression rate_regression(std::span<const SweepRow> rows) {
    if (rows.size() < 5) throw ArgumentError("rate_regression: need >= 5 lambda points");
    double lo = rows[0].lambda, hi = rows[0].lambda;
    for (const auto& r : rows) {
        lo = std::min(lo, r.lambda);
        hi = std::max(hi, r.lambda);
    }
    if (!(lo > 0.0)) throw ArgumentError("rate_regression: lambda points must be > 0");
    if (hi / lo < 10.0) {
        throw ArgumentError("rate_regression: lambda grid must span at least one decade");
    }

    std::vector<double> lambdas, log_lambdas, log_pk, jg, samples;
    for (const auto& r : rows) {
        if (!(r.mean_personalization > 0.0)) {
            throw ArgumentError("rate_regression: P_k must be > 0 for the log-log fit");
        }
        lambdas.push_back(r.lambda);
        log_lambdas.push_back(std::log(r.lambda));
        log_pk.push_back(std::log(r.mean_personalization));
        jg.push_back(r.global_performance);
        samples.push_back(r.samples_to_eps);
    }
    auto all_equal = [](const std::vector<double>& xs) {
        return std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); });
    };
    if (all_equal(log_pk) && all_equal(jg)) {
        throw ArgumentError("rate_regression: degenerate sweep (no variation)");
    }

    RateRegression out;
    out.personalization_loglog = linear_fit(log_lambdas, log_pk);
    out.global_performance_linear = linear_fit(lambdas, jg);
    out.samples_linear = linear_fit(lambdas, samples);
    return out;
}

}  // namespace fedrlhf
