#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/feedback.hpp"
#include "fedrlhf/gradient_source.hpp"
#include "fedrlhf/parameter_vector.hpp"
#include "fedrlhf/rng.hpp"

namespace fedrlhf {

enum class LearnerKind { policy_gradient, q_learning };

/**
 * One client's local-update hyperparameters: tau inner steps of learning
 * rate eta on mini-batches of batch_size trajectories (policy gradient) or
 * batch_size transitions per inner step (Q-learning), with per-client
 * feedback weight lambda.
 */
struct LocalConfig {
    int tau = 1;
    double eta = 0.1;
    int batch_size = 1;
    double lambda = 0.0;
    LearnerKind learner_kind = LearnerKind::policy_gradient;

    int horizon = 64;        // episode length for policy-gradient rollouts
    double clip_norm = 0.0;  // > 0 enforces ||g_hat|| <= clip_norm
    bool use_baseline = false;
    bool use_adam = false;  // opt-in adaptive moments (recommender experiments)

    double q_alpha = 0.1;    // Q-learning step size
    double q_epsilon = 0.1;  // epsilon-greedy exploration rate

    void validate() const;
};

/// One client's contribution to a round: delta = theta_local_after_tau - theta_global.
struct ClientUpdate {
    int client_id = 0;
    int round = 0;
    ParameterVector delta;
    std::int64_t n_samples = 0;
};

/// Tabular action-value table exchanged through the same aggregation path as
/// policy parameters (flattened row-major over (state, action)).
struct QTable {
    std::vector<double> q;
    int n_states = 0;
    int n_actions = 0;

    QTable() = default;
    QTable(int states, int actions)
        : q(static_cast<std::size_t>(states) * actions, 0.0), n_states(states), n_actions(actions) {}

    double& at(int s, int a) { return q[static_cast<std::size_t>(s) * n_actions + a]; }
    double at(int s, int a) const { return q[static_cast<std::size_t>(s) * n_actions + a]; }

    ParameterVector as_parameters() const { return ParameterVector(q); }
    static QTable from_parameters(const ParameterVector& theta, int states, int actions);

    int greedy_action(int s) const;
};

/**
 * REINFORCE estimate of the shaped-objective gradient: the mean over
 * batch_size trajectories of sum_t gamma^t grad log pi(a_t|s_t) G_t, with
 * G_t the discounted shaped return-to-go from step t. Follows the
 * sample-then-collect-feedback-then-shape order of the local loop: the batch
 * is rolled out first, the feedback source observes it, and shaped rewards
 * are filled in from the post-observation feedback values.
 *
 * Returns the gradient and the number of environment steps consumed.
 */
std::pair<ParameterVector, std::int64_t> estimate_policy_gradient(const ParameterVector& theta,
                                                                  const EnvironmentSpec& env,
                                                                  FeedbackSource& feedback,
                                                                  const LocalConfig& cfg,
                                                                  RngStream& rng);

/// GradientSource adapter for the REINFORCE estimator, used by the generic
/// local epoch and the federation handles.
class ReinforceGradientSource final : public GradientSource {
public:
    ReinforceGradientSource(const EnvironmentSpec& env, FeedbackSource& feedback, LocalConfig cfg)
        : env_(&env), feedback_(&feedback), cfg_(std::move(cfg)) {}

    ParameterVector estimate(const ParameterVector& theta, RngStream& rng,
                             std::int64_t& n_samples) override;
    std::size_t dim() const override { return env_->policy_dim(); }

private:
    const EnvironmentSpec* env_;
    FeedbackSource* feedback_;
    LocalConfig cfg_;
};

/**
 * Lines 5-12 of the federated loop for one client: theta <- theta + eta * g_hat
 * for exactly tau inner steps, starting from the broadcast global parameters.
 * Throws NumericalError (with round/step diagnostics) if an estimate comes
 * back non-finite.
 */
ClientUpdate local_rlhf_epoch(const ParameterVector& theta_global, GradientSource& source,
                              const LocalConfig& cfg, RngStream& rng, int client_id = 0,
                              int round = 0);

/**
 * Tabular Q-learning local epoch: tau iterations of (sample batch_size
 * epsilon-greedy transitions, let the feedback source observe them, replay
 * the batch applying shaped one-step backups). The shaped reward uses the
 * feedback source's current prediction as H_k. Q entries are clipped to
 * +-(r_max + lambda h_max)/(1-gamma).
 *
 * Returns the updated table plus the update over flattened Q-values.
 */
std::pair<QTable, ClientUpdate> q_learning_epoch(const QTable& qtable, const EnvironmentSpec& env,
                                                 FeedbackSource& feedback, const LocalConfig& cfg,
                                                 RngStream& rng, int client_id = 0, int round = 0);

}  // namespace fedrlhf
