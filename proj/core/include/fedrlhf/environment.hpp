#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fedrlhf/distribution.hpp"
#include "fedrlhf/parameter_vector.hpp"
#include "fedrlhf/rng.hpp"

namespace fedrlhf {

/**
 * A client MDP M_k = (S, A, P_k, R0_k, rho0, gamma) in tabular form.
 *
 * transition is row-stochastic: transition[(s*A + a)*S + s'] = P(s'|s,a),
 * each row summing to 1 within 1e-12. intrinsic_reward[(s*A + a)] = R0(s,a)
 * with |R0| <= r_max. gamma in [0,1). rho0 is a distribution over states.
 *
 * gamma and rho0 are shared by every client of a federation run; validation
 * of that cross-client invariant happens where runs are assembled.
 */
class EnvironmentSpec {
public:
    EnvironmentSpec(int n_states, int n_actions, std::vector<double> transition,
                    std::vector<double> intrinsic_reward, std::vector<double> rho0, double gamma,
                    double r_max = -1.0);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    double gamma() const { return gamma_; }
    double r_max() const { return r_max_; }
    const std::vector<double>& rho0() const { return rho0_; }
    const std::vector<double>& transition_table() const { return transition_; }
    const std::vector<double>& reward_table() const { return intrinsic_reward_; }

    double transition(int s, int a, int s_next) const {
        return transition_[(static_cast<std::size_t>(s) * n_actions_ + a) * n_states_ + s_next];
    }
    double reward(int s, int a) const {
        return intrinsic_reward_[static_cast<std::size_t>(s) * n_actions_ + a];
    }
    const double* transition_row(int s, int a) const {
        return transition_.data() + (static_cast<std::size_t>(s) * n_actions_ + a) * n_states_;
    }

    /// Parameter dimension of the tabular softmax policy for this MDP.
    std::size_t policy_dim() const {
        return static_cast<std::size_t>(n_states_) * n_actions_;
    }

    std::string to_json() const;
    static EnvironmentSpec from_json(const std::string& text);

private:
    int n_states_;
    int n_actions_;
    std::vector<double> transition_;
    std::vector<double> intrinsic_reward_;
    std::vector<double> rho0_;
    double gamma_;
    double r_max_;
};

/// pi_theta(.|s) for the tabular softmax parameterization (theta indexed by
/// (s, a), row-major).
Distribution policy_distribution(const EnvironmentSpec& env, const ParameterVector& theta, int s);

struct TrajectoryStep {
    int state;
    int action;
    double intrinsic_reward;
    double shaped_reward;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;

    std::size_t length() const { return steps.size(); }
    double discounted_intrinsic_return(double gamma) const;
    double discounted_shaped_return(double gamma) const;
};

/**
 * Reward shaping hook for rollouts: shaped = intrinsic + lambda * feedback(s, a).
 * The feedback callable must already respect the run's H_max bound.
 */
struct RewardShaping {
    double lambda = 0.0;
    std::function<double(int, int)> feedback;  // H(s, a)

    double shaped(int s, int a, double intrinsic) const {
        if (lambda == 0.0 || !feedback) return intrinsic;
        return intrinsic + lambda * feedback(s, a);
    }
};

/// Samples a trajectory of exactly `horizon` steps under the tabular softmax
/// policy theta. State and action draws come from `rng` only.
Trajectory rollout(const EnvironmentSpec& env, const ParameterVector& theta, int horizon,
                   RngStream& rng, const RewardShaping& shaping = {});

/// Exact policy value J(theta) = rho0^T (I - gamma P_pi)^{-1} r_pi, by dense
/// linear solve for small state spaces and value iteration (1e-10 residual)
/// for larger ones.
double exact_value(const EnvironmentSpec& env, const ParameterVector& theta);

/// Same, but with a caller-supplied reward table r[(s*A + a)] replacing the
/// intrinsic rewards (used for shaped objectives).
double exact_value_with_reward(const EnvironmentSpec& env, const ParameterVector& theta,
                               const std::vector<double>& reward_table);

/// Per-state values v_pi(s) for the policy (intrinsic rewards).
std::vector<double> exact_state_values(const EnvironmentSpec& env, const ParameterVector& theta);

/// Normalized discounted state-visitation distribution
/// d(s) = (1-gamma) sum_t gamma^t Pr(s_t = s).
std::vector<double> discounted_visitation(const EnvironmentSpec& env, const ParameterVector& theta);

/// Optimal Q-values by value iteration to the given residual tolerance.
/// Returned table is q[(s*A + a)].
std::vector<double> optimal_q_values(const EnvironmentSpec& env, double tol = 1e-10);

}  // namespace fedrlhf
