#include "fedrlhf/local_learner.hpp"

#include <algorithm>
#include <cmath>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

namespace {
// Purpose tag for the feedback oracle's forked rng stream.
constexpr std::uint64_t kFeedbackRngPurpose = 0xfeedbacc00000001ULL;
}  // namespace

void LocalConfig::validate() const {
    if (tau < 1) throw ArgumentError("LocalConfig: tau must be >= 1");
    if (!(eta > 0.0)) throw ArgumentError("LocalConfig: eta must be > 0");
    if (batch_size < 1) throw ArgumentError("LocalConfig: batch_size must be >= 1");
    if (lambda < 0.0) throw ArgumentError("LocalConfig: lambda must be >= 0");
    if (horizon < 1) throw ArgumentError("LocalConfig: horizon must be >= 1");
    if (clip_norm < 0.0) throw ArgumentError("LocalConfig: clip_norm must be >= 0");
    if (!(q_alpha > 0.0 && q_alpha <= 1.0)) throw ArgumentError("LocalConfig: q_alpha in (0, 1]");
    if (q_epsilon < 0.0 || q_epsilon > 1.0) throw ArgumentError("LocalConfig: q_epsilon in [0, 1]");
}

QTable QTable::from_parameters(const ParameterVector& theta, int states, int actions) {
    if (theta.dim() != static_cast<std::size_t>(states) * actions) {
        throw ArgumentError("QTable: parameter dimension mismatch");
    }
    QTable t(states, actions);
    t.q = theta.values();
    return t;
}

int QTable::greedy_action(int s) const {
    int best = 0;
    for (int a = 1; a < n_actions; ++a) {
        if (at(s, a) > at(s, best)) best = a;
    }
    return best;
}

std::pair<ParameterVector, std::int64_t> estimate_policy_gradient(const ParameterVector& theta,
                                                                  const EnvironmentSpec& env,
                                                                  FeedbackSource& feedback,
                                                                  const LocalConfig& cfg,
                                                                  RngStream& rng) {
    cfg.validate();
    if (theta.dim() != env.policy_dim()) {
        throw ArgumentError("estimate_policy_gradient: theta dimension mismatch");
    }

    // The oracle gets its own stream so the environment draws are identical
    // no matter which oracle is plugged in.
    RngStream fb_rng = rng.fork(kFeedbackRngPurpose);

    std::vector<Trajectory> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
        batch.push_back(rollout(env, theta, cfg.horizon, rng));
    }
    feedback.observe(batch, theta, fb_rng);
    if (cfg.lambda > 0.0) {
        for (auto& traj : batch) {
            for (auto& step : traj.steps) {
                step.shaped_reward = shape_reward(step.intrinsic_reward,
                                                  feedback.h(step.state, step.action), cfg.lambda);
            }
        }
    }

    const double gamma = env.gamma();
    const int m = env.n_actions();

    // Optional variance reduction: per-timestep mean shaped return-to-go.
    std::vector<double> baseline;
    if (cfg.use_baseline) {
        baseline.assign(static_cast<std::size_t>(cfg.horizon), 0.0);
        for (const auto& traj : batch) {
            double g = 0.0;
            for (std::size_t t = traj.steps.size(); t-- > 0;) {
                g = traj.steps[t].shaped_reward + gamma * g;
                baseline[t] += g;
            }
        }
        for (double& b : baseline) b /= cfg.batch_size;
    }

    ParameterVector grad(theta.dim());
    for (const auto& traj : batch) {
        // return-to-go, then a forward pass over grad log pi terms
        std::vector<double> togo(traj.steps.size());
        double g = 0.0;
        for (std::size_t t = traj.steps.size(); t-- > 0;) {
            g = traj.steps[t].shaped_reward + gamma * g;
            togo[t] = g;
        }
        double discount = 1.0;
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
            const int s = traj.steps[t].state;
            const int a = traj.steps[t].action;
            const double advantage = togo[t] - (cfg.use_baseline ? baseline[t] : 0.0);
            const double coef = discount * advantage;
            const Distribution pi = policy_distribution(env, theta, s);
            double* row = grad.data() + static_cast<std::size_t>(s) * m;
            for (int b = 0; b < m; ++b) row[b] -= coef * pi[b];
            row[a] += coef;
            discount *= gamma;
        }
    }
    grad *= 1.0 / cfg.batch_size;
    if (cfg.clip_norm > 0.0) grad.clip_norm(cfg.clip_norm);

    const std::int64_t n_samples =
        static_cast<std::int64_t>(cfg.batch_size) * static_cast<std::int64_t>(cfg.horizon);
    return {std::move(grad), n_samples};
}

ParameterVector ReinforceGradientSource::estimate(const ParameterVector& theta, RngStream& rng,
                                                  std::int64_t& n_samples) {
    auto [grad, used] = estimate_policy_gradient(theta, *env_, *feedback_, cfg_, rng);
    n_samples += used;
    return std::move(grad);
}

ClientUpdate local_rlhf_epoch(const ParameterVector& theta_global, GradientSource& source,
                              const LocalConfig& cfg, RngStream& rng, int client_id, int round) {
    cfg.validate();
    theta_global.ensure_finite("local_rlhf_epoch: global parameters");
    if (theta_global.dim() != source.dim()) {
        throw ArgumentError("local_rlhf_epoch: theta dimension mismatch");
    }

    ParameterVector theta = theta_global;
    std::int64_t n_samples = 0;

    // Adam state lives for the duration of one local epoch; clients restart
    // from the broadcast parameters every round.
    ParameterVector adam_m, adam_v;
    if (cfg.use_adam) {
        adam_m = ParameterVector(theta.dim());
        adam_v = ParameterVector(theta.dim());
    }

    for (int i = 0; i < cfg.tau; ++i) {
        ParameterVector g = source.estimate(theta, rng, n_samples);
        for (std::size_t j = 0; j < g.dim(); ++j) {
            if (!std::isfinite(g[j])) {
                throw NumericalError("local_rlhf_epoch: non-finite gradient (client " +
                                     std::to_string(client_id) + ", round " +
                                     std::to_string(round) + ", step " + std::to_string(i) + ")");
            }
        }
        if (cfg.use_adam) {
            constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
            const double bc1 = 1.0 - std::pow(beta1, i + 1);
            const double bc2 = 1.0 - std::pow(beta2, i + 1);
            for (std::size_t j = 0; j < theta.dim(); ++j) {
                adam_m[j] = beta1 * adam_m[j] + (1.0 - beta1) * g[j];
                adam_v[j] = beta2 * adam_v[j] + (1.0 - beta2) * g[j] * g[j];
                theta[j] += cfg.eta * (adam_m[j] / bc1) / (std::sqrt(adam_v[j] / bc2) + eps);
            }
        } else {
            theta.axpy(cfg.eta, g);
        }
        theta.ensure_finite("local_rlhf_epoch: updated parameters");
    }

    ClientUpdate update;
    update.client_id = client_id;
    update.round = round;
    update.delta = theta - theta_global;
    update.n_samples = n_samples;
    return update;
}

std::pair<QTable, ClientUpdate> q_learning_epoch(const QTable& qtable, const EnvironmentSpec& env,
                                                 FeedbackSource& feedback, const LocalConfig& cfg,
                                                 RngStream& rng, int client_id, int round) {
    cfg.validate();
    if (qtable.n_states != env.n_states() || qtable.n_actions != env.n_actions()) {
        throw ArgumentError("q_learning_epoch: Q-table dimension mismatch");
    }

    RngStream fb_rng = rng.fork(kFeedbackRngPurpose);
    QTable q = qtable;
    const double gamma = env.gamma();
    const double q_bound =
        (env.r_max() + cfg.lambda * feedback.h_max()) / (1.0 - gamma) + 1e-9;

    int s = rng.next_index(env.rho0().data(), env.n_states());
    for (int i = 0; i < cfg.tau; ++i) {
        // Sample a batch of transitions under the frozen epsilon-greedy policy.
        Trajectory batch;
        batch.steps.reserve(static_cast<std::size_t>(cfg.batch_size));
        std::vector<int> next_states(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            int a;
            if (cfg.q_epsilon > 0.0 && rng.next_double() < cfg.q_epsilon) {
                a = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(env.n_actions())));
            } else {
                a = q.greedy_action(s);
            }
            const double r0 = env.reward(s, a);
            const int s_next = rng.next_index(env.transition_row(s, a), env.n_states());
            batch.steps.push_back({s, a, r0, r0});
            next_states[static_cast<std::size_t>(b)] = s_next;
            s = s_next;
        }

        feedback.observe(std::span<const Trajectory>(&batch, 1), q.as_parameters(), fb_rng);

        // Replay with shaped rewards; H_k is the feedback source's current
        // (reward-model-backed) prediction.
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& step = batch.steps[static_cast<std::size_t>(b)];
            const double h = cfg.lambda > 0.0 ? feedback.h(step.state, step.action) : 0.0;
            const double r = shape_reward(step.intrinsic_reward, h, cfg.lambda);
            const int s_next = next_states[static_cast<std::size_t>(b)];
            double best_next = q.at(s_next, 0);
            for (int a2 = 1; a2 < env.n_actions(); ++a2) {
                best_next = std::max(best_next, q.at(s_next, a2));
            }
            double& cell = q.at(step.state, step.action);
            cell += cfg.q_alpha * (r + gamma * best_next - cell);
            cell = std::min(q_bound, std::max(-q_bound, cell));
            if (!std::isfinite(cell)) {
                throw NumericalError("q_learning_epoch: non-finite Q-value (client " +
                                     std::to_string(client_id) + ", round " +
                                     std::to_string(round) + ")");
            }
        }
    }

    ClientUpdate update;
    update.client_id = client_id;
    update.round = round;
    update.delta = q.as_parameters() - qtable.as_parameters();
    update.n_samples = static_cast<std::int64_t>(cfg.tau) * cfg.batch_size;
    return {std::move(q), std::move(update)};
}

}  // namespace fedrlhf
