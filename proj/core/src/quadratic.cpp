#include "fedrlhf/quadratic.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

namespace {

Eigen::MatrixXd as_matrix(const std::vector<double>& flat, int dim) {
    Eigen::MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) m(i, j) = flat[static_cast<std::size_t>(i) * dim + j];
    }
    return m;
}

}  // namespace

QuadraticObjectiveSpec QuadraticObjectiveSpec::random(int dim, int n_clients, double eig_lo,
                                                      double eig_hi, RngStream& rng) {
    if (dim <= 0 || n_clients <= 0) throw ArgumentError("quadratic: sizes must be positive");
    if (!(eig_lo > 0.0) || eig_hi < eig_lo) {
        throw ArgumentError("quadratic: need 0 < eig_lo <= eig_hi");
    }
    std::vector<std::vector<double>> a_mats;
    std::vector<std::vector<double>> b_vecs;
    a_mats.reserve(n_clients);
    b_vecs.reserve(n_clients);
    for (int k = 0; k < n_clients; ++k) {
        // Random rotation from the QR of a Gaussian matrix.
        Eigen::MatrixXd g(dim, dim);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) g(i, j) = rng.next_gaussian();
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ();
        Eigen::VectorXd spectrum(dim);
        for (int i = 0; i < dim; ++i) {
            spectrum[i] = eig_lo + (eig_hi - eig_lo) * rng.next_double();
        }
        Eigen::MatrixXd a = q * spectrum.asDiagonal() * q.transpose();
        a = 0.5 * (a + a.transpose());  // symmetrize round-off

        std::vector<double> a_flat(static_cast<std::size_t>(dim) * dim);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) a_flat[static_cast<std::size_t>(i) * dim + j] = a(i, j);
        }
        std::vector<double> b(dim);
        for (int i = 0; i < dim; ++i) b[i] = rng.next_gaussian();
        a_mats.push_back(std::move(a_flat));
        b_vecs.push_back(std::move(b));
    }
    return QuadraticObjectiveSpec(dim, std::move(a_mats), std::move(b_vecs));
}

QuadraticObjectiveSpec::QuadraticObjectiveSpec(int dim, std::vector<std::vector<double>> a_matrices,
                                               std::vector<std::vector<double>> b_vectors)
    : dim_(dim), a_(std::move(a_matrices)), b_(std::move(b_vectors)) {
    if (a_.empty() || a_.size() != b_.size()) {
        throw ArgumentError("quadratic: need matching non-empty A and b lists");
    }
    const std::size_t d2 = static_cast<std::size_t>(dim_) * dim_;
    Eigen::MatrixXd mean_a = Eigen::MatrixXd::Zero(dim_, dim_);
    for (std::size_t k = 0; k < a_.size(); ++k) {
        if (a_[k].size() != d2 || b_[k].size() != static_cast<std::size_t>(dim_)) {
            throw ArgumentError("quadratic: client " + std::to_string(k) + " has wrong dimensions");
        }
        Eigen::MatrixXd ak = as_matrix(a_[k], dim_);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ak, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() <= 0.0) {
            throw ArgumentError("quadratic: A_" + std::to_string(k) + " is not positive definite");
        }
        mean_a += ak;
    }
    mean_a /= static_cast<double>(a_.size());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mean_a, Eigen::EigenvaluesOnly);
    mu_ = es.eigenvalues().minCoeff();
    lipschitz_ = es.eigenvalues().maxCoeff();

    Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(dim_);
    for (const auto& b : b_) {
        for (int i = 0; i < dim_; ++i) mean_b[i] += b[i];
    }
    mean_b /= static_cast<double>(b_.size());
    Eigen::VectorXd opt = mean_a.ldlt().solve(mean_b);
    optimum_ = ParameterVector(std::vector<double>(opt.data(), opt.data() + dim_));
    optimal_value_ = global_objective(optimum_);
}

ParameterVector QuadraticObjectiveSpec::client_gradient(int k, const ParameterVector& theta) const {
    if (theta.dim() != static_cast<std::size_t>(dim_)) {
        throw ArgumentError("quadratic gradient: theta dimension mismatch");
    }
    const auto& a = a_[k];
    const auto& b = b_[k];
    ParameterVector g(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) {
        double ax = 0.0;
        for (int j = 0; j < dim_; ++j) ax += a[static_cast<std::size_t>(i) * dim_ + j] * theta[j];
        g[i] = b[i] - ax;
    }
    return g;
}

double QuadraticObjectiveSpec::client_objective(int k, const ParameterVector& theta) const {
    const auto& a = a_[k];
    const auto& b = b_[k];
    double quad = 0.0, lin = 0.0;
    for (int i = 0; i < dim_; ++i) {
        double ax = 0.0;
        for (int j = 0; j < dim_; ++j) ax += a[static_cast<std::size_t>(i) * dim_ + j] * theta[j];
        quad += theta[i] * ax;
        lin += b[i] * theta[i];
    }
    return -(0.5 * quad - lin);
}

ParameterVector QuadraticObjectiveSpec::global_gradient(const ParameterVector& theta) const {
    ParameterVector g(static_cast<std::size_t>(dim_));
    for (int k = 0; k < n_clients(); ++k) g += client_gradient(k, theta);
    g *= 1.0 / n_clients();
    return g;
}

double QuadraticObjectiveSpec::global_objective(const ParameterVector& theta) const {
    double j = 0.0;
    for (int k = 0; k < n_clients(); ++k) j += client_objective(k, theta);
    return j / n_clients();
}

void QuadraticGradientSource::set_feedback_pull(double lambda, double h_max,
                                                ParameterVector target) {
    if (lambda < 0.0) throw ArgumentError("feedback pull: lambda must be >= 0");
    if (h_max < 0.0) throw ArgumentError("feedback pull: h_max must be >= 0");
    pull_lambda_ = lambda;
    pull_h_max_ = h_max;
    pull_target_ = std::move(target);
}

ParameterVector QuadraticGradientSource::estimate(const ParameterVector& theta, RngStream& rng,
                                                  std::int64_t& n_samples) {
    ParameterVector g = spec_->client_gradient(client_, theta);
    if (clip_norm_ > 0.0) g.clip_norm(clip_norm_);
    if (pull_lambda_ > 0.0 && pull_h_max_ > 0.0) {
        ParameterVector dir = pull_target_ - theta;
        const double n = dir.norm();
        const double scale = pull_lambda_ * pull_h_max_ / std::max(1.0, n);
        g.axpy(scale, dir);
    }
    if (noise_sd_total_ > 0.0) {
        const double per_coord = noise_sd_total_ / std::sqrt(static_cast<double>(g.dim()));
        for (std::size_t i = 0; i < g.dim(); ++i) g[i] += per_coord * rng.next_gaussian();
    }
    n_samples += 1;
    return g;
}

ParameterVector QuadraticObjectiveHandle::stochastic_gradient(int k, const ParameterVector& theta,
                                                              RngStream& rng) const {
    ParameterVector g = spec_->client_gradient(k, theta);
    if (noise_sd_total_ > 0.0) {
        const double per_coord = noise_sd_total_ / std::sqrt(static_cast<double>(g.dim()));
        for (std::size_t i = 0; i < g.dim(); ++i) g[i] += per_coord * rng.next_gaussian();
    }
    return g;
}

}  // namespace fedrlhf
