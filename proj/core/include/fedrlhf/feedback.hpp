#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/rng.hpp"

namespace fedrlhf {

enum class FeedbackKind { direct, comparative };

/**
 * One bounded human-feedback signal, |value| <= h_max.
 *
 * Context meaning by kind:
 *   direct      — context_a = state id, context_b = action id;
 *   comparative — context_a / context_b = states of the compared pair
 *                 (the prediction in question is "predict-high").
 */
struct FeedbackEvent {
    FeedbackKind kind;
    double value;
    int context_a = -1;
    int context_b = -1;
};

struct FeedbackOracleConfig {
    double noise_sd = 0.0;   // std. dev. of the perturbation on the true rating
    double threshold = 0.5;  // "about right" band half-width
    double h_max = 1.0;

    void validate() const;
};

/**
 * Direct feedback on a rating prediction: the oracle perturbs the true rating
 * with Gaussian noise and categorizes the prediction as too high (-1),
 * too low (+1) or about right (0) relative to the threshold band.
 * Ratings must be in [1, 5].
 */
FeedbackEvent direct_feedback(double predicted_rating, double true_rating,
                              const FeedbackOracleConfig& cfg, RngStream& rng, int context_state = -1,
                              int context_action = -1);

/**
 * Comparative feedback on an item pair: the true preference is the sign of
 * the (optionally noise-perturbed) rating difference, mapped to +1 when the
 * first item is preferred, -1 when the second is, 0 when equal. Returns the
 * true preference when it differs from predicted_pref, else 0.
 */
FeedbackEvent comparative_feedback(double true_a, double true_b, int predicted_pref, RngStream& rng,
                                   double noise_sd = 0.0, int context_a = -1, int context_b = -1);

/// R_k(s,a) = R0_k(s,a) + lambda * H_k(s,a). lambda must be >= 0; the feedback
/// value must already be clipped to the run's H_max.
double shape_reward(double intrinsic, double feedback_value, double lambda);

/**
 * Linear reward model over (state, action) features; the desk-scale stand-in
 * for the per-client preference network. Predictions are clipped to
 * [-h_max, h_max] at inference so the shaped reward respects the feedback
 * bound. Default features are one-hot per (state, action).
 */
class RewardModel {
public:
    RewardModel(int n_states, int n_actions, double learning_rate, double h_max = 1.0);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    double h_max() const { return h_max_; }

    /// Clipped prediction.
    double predict(int state, int action) const;
    double raw_weight(int state, int action) const;
    const std::vector<double>& weights() const { return weights_; }

    /// One least-squares gradient step per event, in batch order. Comparative
    /// events train the predict-high weight of both pair members (+value for
    /// the first, -value for the second).
    void update(std::span<const FeedbackEvent> batch);

private:
    void step(int state, int action, double target);

    int n_states_;
    int n_actions_;
    double learning_rate_;
    double h_max_;
    std::vector<double> weights_;
};

/// Functional form of RewardModel::update for callers that want value
/// semantics: returns the updated copy.
RewardModel reward_model_update(RewardModel model, std::span<const FeedbackEvent> batch);

/**
 * A client's feedback channel as seen by the local learner: h(s, a) is the
 * current bounded feedback signal, and observe() lets rule-based oracles
 * react to freshly sampled experience (generate events, train the reward
 * model). current_params are the learner's parameters at sampling time, so
 * oracles can reconstruct the model's predictions. observe() must draw only
 * from the rng it is handed.
 */
class FeedbackSource {
public:
    virtual ~FeedbackSource() = default;
    virtual double h(int state, int action) const = 0;
    virtual double h_max() const = 0;
    virtual void observe(std::span<const Trajectory> batch, const ParameterVector& current_params,
                         RngStream& rng) {
        (void)batch;
        (void)current_params;
        (void)rng;
    }
};

class ZeroFeedback final : public FeedbackSource {
public:
    double h(int, int) const override { return 0.0; }
    double h_max() const override { return 0.0; }
};

/// Fixed bounded feedback table H(s, a); the feedback-pull family uses this.
class TableFeedback final : public FeedbackSource {
public:
    TableFeedback(int n_states, int n_actions, std::vector<double> table, double h_max);

    double h(int state, int action) const override {
        return table_[static_cast<std::size_t>(state) * n_actions_ + action];
    }
    double h_max() const override { return h_max_; }

private:
    int n_states_;
    int n_actions_;
    std::vector<double> table_;
    double h_max_;
};

/// CSV export of collected feedback events:
/// round,client,kind,context,value with context "a:b".
std::string feedback_events_csv_header();
std::string feedback_event_csv_row(int round, int client, const FeedbackEvent& event);

}  // namespace fedrlhf
