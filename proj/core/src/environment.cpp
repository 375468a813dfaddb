#include "fedrlhf/environment.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <nlohmann/json.hpp>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

namespace {
constexpr double kRowSumTol = 1e-12;
// Dense LU is exact and fast up to a few hundred states; beyond that value
// iteration wins on memory and time.
constexpr int kDenseSolveMaxStates = 512;
}  // namespace

EnvironmentSpec::EnvironmentSpec(int n_states, int n_actions, std::vector<double> transition,
                                 std::vector<double> intrinsic_reward, std::vector<double> rho0,
                                 double gamma, double r_max)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      intrinsic_reward_(std::move(intrinsic_reward)),
      rho0_(std::move(rho0)),
      gamma_(gamma),
      r_max_(r_max) {
    if (n_states_ <= 0 || n_actions_ <= 0) {
        throw ArgumentError("EnvironmentSpec: state and action counts must be positive");
    }
    const std::size_t sa = static_cast<std::size_t>(n_states_) * n_actions_;
    if (transition_.size() != sa * n_states_) {
        throw ArgumentError("EnvironmentSpec: transition table has wrong size");
    }
    if (intrinsic_reward_.size() != sa) {
        throw ArgumentError("EnvironmentSpec: reward table has wrong size");
    }
    if (rho0_.size() != static_cast<std::size_t>(n_states_)) {
        throw ArgumentError("EnvironmentSpec: rho0 has wrong size");
    }
    if (!(gamma_ >= 0.0 && gamma_ < 1.0)) {
        throw ArgumentError("EnvironmentSpec: gamma must be in [0, 1)");
    }
    for (std::size_t row = 0; row < sa; ++row) {
        double sum = 0.0;
        for (int s2 = 0; s2 < n_states_; ++s2) {
            const double p = transition_[row * n_states_ + s2];
            if (!(p >= 0.0) || !std::isfinite(p)) {
                throw ArgumentError("EnvironmentSpec: invalid transition probability");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTol) {
            throw ArgumentError("EnvironmentSpec: transition row " + std::to_string(row) +
                                " sums to " + std::to_string(sum));
        }
    }
    Distribution check_rho(rho0_);  // validates the initial distribution
    double max_abs_r = 0.0;
    for (double r : intrinsic_reward_) {
        if (!std::isfinite(r)) throw ArgumentError("EnvironmentSpec: non-finite reward");
        max_abs_r = std::max(max_abs_r, std::abs(r));
    }
    if (r_max_ < 0.0) {
        r_max_ = max_abs_r;
    } else if (max_abs_r > r_max_ + 1e-12) {
        throw ArgumentError("EnvironmentSpec: |R0| exceeds declared r_max");
    }
}

std::string EnvironmentSpec::to_json() const {
    nlohmann::json j;
    j["states"] = n_states_;
    j["actions"] = n_actions_;
    auto& tr = j["transition"] = nlohmann::json::array();
    for (int s = 0; s < n_states_; ++s) {
        nlohmann::json per_action = nlohmann::json::array();
        for (int a = 0; a < n_actions_; ++a) {
            per_action.push_back(std::vector<double>(transition_row(s, a),
                                                     transition_row(s, a) + n_states_));
        }
        tr.push_back(std::move(per_action));
    }
    auto& rw = j["reward"] = nlohmann::json::array();
    for (int s = 0; s < n_states_; ++s) {
        std::vector<double> row(n_actions_);
        for (int a = 0; a < n_actions_; ++a) row[a] = reward(s, a);
        rw.push_back(row);
    }
    j["rho0"] = rho0_;
    j["gamma"] = gamma_;
    return j.dump();
}

EnvironmentSpec EnvironmentSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ArgumentError(std::string("environment JSON: ") + e.what());
    }
    for (const char* key : {"states", "actions", "transition", "reward", "rho0", "gamma"}) {
        if (!j.contains(key)) {
            throw ArgumentError(std::string("environment JSON: missing field '") + key + "'");
        }
    }
    const int n_states = j.at("states").get<int>();
    const int n_actions = j.at("actions").get<int>();
    if (n_states <= 0 || n_actions <= 0) {
        throw ArgumentError("environment JSON: states/actions must be positive");
    }
    std::vector<double> transition;
    transition.reserve(static_cast<std::size_t>(n_states) * n_actions * n_states);
    for (const auto& per_state : j.at("transition")) {
        for (const auto& per_action : per_state) {
            for (const auto& p : per_action) transition.push_back(p.get<double>());
        }
    }
    std::vector<double> reward;
    reward.reserve(static_cast<std::size_t>(n_states) * n_actions);
    for (const auto& per_state : j.at("reward")) {
        for (const auto& r : per_state) reward.push_back(r.get<double>());
    }
    return EnvironmentSpec(n_states, n_actions, std::move(transition), std::move(reward),
                           j.at("rho0").get<std::vector<double>>(), j.at("gamma").get<double>());
}

Distribution policy_distribution(const EnvironmentSpec& env, const ParameterVector& theta, int s) {
    if (theta.dim() != env.policy_dim()) {
        throw ArgumentError("policy_distribution: theta dim " + std::to_string(theta.dim()) +
                            " != " + std::to_string(env.policy_dim()));
    }
    return softmax(std::span<const double>(theta.data() + static_cast<std::size_t>(s) * env.n_actions(),
                                           static_cast<std::size_t>(env.n_actions())));
}

double Trajectory::discounted_intrinsic_return(double gamma) const {
    double acc = 0.0;
    double g = 1.0;
    for (const auto& step : steps) {
        acc += g * step.intrinsic_reward;
        g *= gamma;
    }
    return acc;
}

double Trajectory::discounted_shaped_return(double gamma) const {
    double acc = 0.0;
    double g = 1.0;
    for (const auto& step : steps) {
        acc += g * step.shaped_reward;
        g *= gamma;
    }
    return acc;
}

Trajectory rollout(const EnvironmentSpec& env, const ParameterVector& theta, int horizon,
                   RngStream& rng, const RewardShaping& shaping) {
    if (horizon < 1) throw ArgumentError("rollout: horizon must be >= 1");
    if (theta.dim() != env.policy_dim()) throw ArgumentError("rollout: theta dimension mismatch");

    Trajectory traj;
    traj.steps.reserve(static_cast<std::size_t>(horizon));
    int s = rng.next_index(env.rho0().data(), env.n_states());
    for (int t = 0; t < horizon; ++t) {
        const Distribution pi = policy_distribution(env, theta, s);
        const int a = rng.next_index(pi.data(), env.n_actions());
        const double r0 = env.reward(s, a);
        traj.steps.push_back({s, a, r0, shaping.shaped(s, a, r0)});
        s = rng.next_index(env.transition_row(s, a), env.n_states());
    }
    return traj;
}

namespace {

/// Builds P_pi (S x S) and r_pi (S) for the given policy and reward table.
void policy_chain(const EnvironmentSpec& env, const ParameterVector& theta,
                  const std::vector<double>& reward_table, Eigen::MatrixXd& p_pi,
                  Eigen::VectorXd& r_pi) {
    const int n = env.n_states();
    const int m = env.n_actions();
    p_pi.setZero(n, n);
    r_pi.setZero(n);
    for (int s = 0; s < n; ++s) {
        const Distribution pi = policy_distribution(env, theta, s);
        for (int a = 0; a < m; ++a) {
            const double w = pi[a];
            if (w == 0.0) continue;
            r_pi[s] += w * reward_table[static_cast<std::size_t>(s) * m + a];
            const double* row = env.transition_row(s, a);
            for (int s2 = 0; s2 < n; ++s2) p_pi(s, s2) += w * row[s2];
        }
    }
}

Eigen::VectorXd state_values(const EnvironmentSpec& env, const ParameterVector& theta,
                             const std::vector<double>& reward_table) {
    const int n = env.n_states();
    Eigen::MatrixXd p_pi;
    Eigen::VectorXd r_pi;
    policy_chain(env, theta, reward_table, p_pi, r_pi);

    if (n <= kDenseSolveMaxStates) {
        Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - env.gamma() * p_pi;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
        Eigen::VectorXd v = lu.solve(r_pi);
        if (!v.allFinite()) {
            throw NumericalError("exact_value: singular system (gamma < 1 should prevent this)");
        }
        return v;
    }
    // Value iteration fallback; contraction rate gamma guarantees convergence.
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    const double gamma = env.gamma();
    for (int it = 0; it < 1000000; ++it) {
        Eigen::VectorXd next = r_pi + gamma * (p_pi * v);
        const double residual = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (residual < 1e-10 * (1.0 - gamma)) break;
    }
    return v;
}

}  // namespace

double exact_value_with_reward(const EnvironmentSpec& env, const ParameterVector& theta,
                               const std::vector<double>& reward_table) {
    if (reward_table.size() != env.policy_dim()) {
        throw ArgumentError("exact_value_with_reward: reward table size mismatch");
    }
    const Eigen::VectorXd v = state_values(env, theta, reward_table);
    double j = 0.0;
    for (int s = 0; s < env.n_states(); ++s) j += env.rho0()[s] * v[s];
    return j;
}

double exact_value(const EnvironmentSpec& env, const ParameterVector& theta) {
    return exact_value_with_reward(env, theta, env.reward_table());
}

std::vector<double> exact_state_values(const EnvironmentSpec& env, const ParameterVector& theta) {
    const Eigen::VectorXd v = state_values(env, theta, env.reward_table());
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> discounted_visitation(const EnvironmentSpec& env, const ParameterVector& theta) {
    const int n = env.n_states();
    Eigen::MatrixXd p_pi;
    Eigen::VectorXd r_pi;
    policy_chain(env, theta, env.reward_table(), p_pi, r_pi);
    // d^T = (1-gamma) rho0^T (I - gamma P)^{-1}  <=>  (I - gamma P^T) d = (1-gamma) rho0
    Eigen::VectorXd rho(n);
    for (int s = 0; s < n; ++s) rho[s] = env.rho0()[s];
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - env.gamma() * p_pi.transpose();
    Eigen::VectorXd d = system.partialPivLu().solve((1.0 - env.gamma()) * rho);
    std::vector<double> out(d.data(), d.data() + d.size());
    for (double& x : out) x = std::max(x, 0.0);  // clamp solver round-off
    return out;
}

std::vector<double> optimal_q_values(const EnvironmentSpec& env, double tol) {
    const int n = env.n_states();
    const int m = env.n_actions();
    std::vector<double> q(static_cast<std::size_t>(n) * m, 0.0);
    std::vector<double> v(n, 0.0);
    const double gamma = env.gamma();
    double residual = std::numeric_limits<double>::infinity();
    while (residual > tol * (1.0 - gamma)) {
        residual = 0.0;
        for (int s = 0; s < n; ++s) {
            for (int a = 0; a < m; ++a) {
                double backup = env.reward(s, a);
                const double* row = env.transition_row(s, a);
                for (int s2 = 0; s2 < n; ++s2) backup += gamma * row[s2] * v[s2];
                q[static_cast<std::size_t>(s) * m + a] = backup;
            }
        }
        for (int s = 0; s < n; ++s) {
            double best = q[static_cast<std::size_t>(s) * m];
            for (int a = 1; a < m; ++a) {
                best = std::max(best, q[static_cast<std::size_t>(s) * m + a]);
            }
            residual = std::max(residual, std::abs(best - v[s]));
            v[s] = best;
        }
    }
    return q;
}

}  // namespace fedrlhf
