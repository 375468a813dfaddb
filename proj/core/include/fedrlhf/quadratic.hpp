#pragma once

#include <vector>

#include "fedrlhf/gradient_source.hpp"
#include "fedrlhf/parameter_vector.hpp"
#include "fedrlhf/rng.hpp"
#include "fedrlhf/theory.hpp"

namespace fedrlhf {

/**
 * Concave quadratic test family for validating the convergence theory:
 * per-client objective J_k(theta) = -(1/2 theta^T A_k theta - b_k^T theta)
 * with A_k symmetric positive definite. The global objective
 * J = (1/K) sum_k J_k then satisfies the PL condition with
 * mu = lambda_min(mean A_k), and its gradients are L-Lipschitz with
 * L = lambda_max(mean A_k); both are computed exactly at construction.
 */
class QuadraticObjectiveSpec {
public:
    /// Random instance: each A_k = Q diag(spectrum) Q^T with per-client random
    /// rotations and eigenvalues drawn uniformly from [eig_lo, eig_hi].
    static QuadraticObjectiveSpec random(int dim, int n_clients, double eig_lo, double eig_hi,
                                         RngStream& rng);

    QuadraticObjectiveSpec(int dim, std::vector<std::vector<double>> a_matrices,
                           std::vector<std::vector<double>> b_vectors);

    int dim() const { return dim_; }
    int n_clients() const { return static_cast<int>(b_.size()); }

    /// mu = lambda_min(mean A_k) > 0, L = lambda_max(mean A_k).
    double mu() const { return mu_; }
    double lipschitz() const { return lipschitz_; }

    /// grad J_k(theta) = b_k - A_k theta.
    ParameterVector client_gradient(int k, const ParameterVector& theta) const;
    double client_objective(int k, const ParameterVector& theta) const;

    ParameterVector global_gradient(const ParameterVector& theta) const;
    double global_objective(const ParameterVector& theta) const;

    /// Analytic optimum theta* = (mean A_k)^{-1} (mean b_k).
    const ParameterVector& optimum() const { return optimum_; }
    double optimal_value() const { return optimal_value_; }

    const std::vector<std::vector<double>>& a_matrices() const { return a_; }
    const std::vector<std::vector<double>>& b_vectors() const { return b_; }

private:
    int dim_;
    std::vector<std::vector<double>> a_;  // row-major dim x dim per client
    std::vector<std::vector<double>> b_;
    double mu_ = 0.0;
    double lipschitz_ = 0.0;
    ParameterVector optimum_;
    double optimal_value_ = 0.0;
};

/**
 * Gradient source for one client of the quadratic family, with the knobs the
 * bound-validation runs need:
 *  - clip_norm > 0 rescales the exact gradient to norm <= clip_norm before
 *    noise is added, enforcing the G bound;
 *  - noise_sd_total > 0 adds iid Gaussian noise of total variance
 *    noise_sd_total^2 (per-coordinate sd = noise_sd_total / sqrt(dim)), the
 *    known sigma^2 of the variance assumption;
 *  - pull_lambda/pull_target/pull_scale add a bounded feedback pull
 *    lambda * h_max * (target - theta)/max(1, ||target - theta||), the
 *    quadratic-family stand-in for the shaped-reward term.
 * Each estimate counts as one sample.
 */
class QuadraticGradientSource : public GradientSource {
public:
    QuadraticGradientSource(const QuadraticObjectiveSpec& spec, int client,
                            double clip_norm = 0.0, double noise_sd_total = 0.0)
        : spec_(&spec), client_(client), clip_norm_(clip_norm), noise_sd_total_(noise_sd_total) {}

    void set_feedback_pull(double lambda, double h_max, ParameterVector target);

    ParameterVector estimate(const ParameterVector& theta, RngStream& rng,
                             std::int64_t& n_samples) override;

    std::size_t dim() const override { return static_cast<std::size_t>(spec_->dim()); }

private:
    const QuadraticObjectiveSpec* spec_;
    int client_;
    double clip_norm_;
    double noise_sd_total_;
    double pull_lambda_ = 0.0;
    double pull_h_max_ = 0.0;
    ParameterVector pull_target_;
};

/// ObjectiveHandle adapter so the constant estimators can sample the
/// quadratic family; stochastic gradients inject Gaussian noise of total
/// variance noise_sd_total^2.
class QuadraticObjectiveHandle final : public ObjectiveHandle {
public:
    QuadraticObjectiveHandle(const QuadraticObjectiveSpec& spec, double noise_sd_total = 0.0)
        : spec_(&spec), noise_sd_total_(noise_sd_total) {}

    std::size_t dim() const override { return static_cast<std::size_t>(spec_->dim()); }
    int n_clients() const override { return spec_->n_clients(); }
    ParameterVector gradient(const ParameterVector& theta) const override {
        return spec_->global_gradient(theta);
    }
    ParameterVector client_gradient(int k, const ParameterVector& theta) const override {
        return spec_->client_gradient(k, theta);
    }
    ParameterVector stochastic_gradient(int k, const ParameterVector& theta,
                                        RngStream& rng) const override;
    double value(const ParameterVector& theta) const override {
        return spec_->global_objective(theta);
    }
    std::optional<double> optimal_value() const override { return spec_->optimal_value(); }

private:
    const QuadraticObjectiveSpec* spec_;
    double noise_sd_total_;
};

}  // namespace fedrlhf
