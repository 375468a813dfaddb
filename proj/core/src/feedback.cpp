#include "fedrlhf/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

namespace {

void check_rating(double r, const char* name) {
    if (!(r >= 1.0 && r <= 5.0)) {
        throw ArgumentError(std::string(name) + " must be in [1, 5], got " + std::to_string(r));
    }
}

double clip(double x, double bound) { return std::min(bound, std::max(-bound, x)); }

}  // namespace

void FeedbackOracleConfig::validate() const {
    if (noise_sd < 0.0) throw ArgumentError("FeedbackOracleConfig: noise_sd must be >= 0");
    if (!(threshold > 0.0)) throw ArgumentError("FeedbackOracleConfig: threshold must be > 0");
    if (!(h_max > 0.0)) throw ArgumentError("FeedbackOracleConfig: h_max must be > 0");
}

FeedbackEvent direct_feedback(double predicted_rating, double true_rating,
                              const FeedbackOracleConfig& cfg, RngStream& rng, int context_state,
                              int context_action) {
    cfg.validate();
    check_rating(predicted_rating, "predicted rating");
    check_rating(true_rating, "true rating");
    const double noisy =
        true_rating + (cfg.noise_sd > 0.0 ? cfg.noise_sd * rng.next_gaussian() : 0.0);
    double value = 0.0;
    if (predicted_rating > noisy + cfg.threshold) {
        value = -1.0;  // too high
    } else if (predicted_rating < noisy - cfg.threshold) {
        value = 1.0;  // too low
    }
    return FeedbackEvent{FeedbackKind::direct, clip(value, cfg.h_max), context_state,
                         context_action};
}

FeedbackEvent comparative_feedback(double true_a, double true_b, int predicted_pref, RngStream& rng,
                                   double noise_sd, int context_a, int context_b) {
    check_rating(true_a, "first rating");
    check_rating(true_b, "second rating");
    if (predicted_pref < -1 || predicted_pref > 1) {
        throw ArgumentError("comparative_feedback: predicted_pref must be in {-1, 0, 1}");
    }
    if (noise_sd < 0.0) throw ArgumentError("comparative_feedback: noise_sd must be >= 0");
    const double a = true_a + (noise_sd > 0.0 ? noise_sd * rng.next_gaussian() : 0.0);
    const double b = true_b + (noise_sd > 0.0 ? noise_sd * rng.next_gaussian() : 0.0);
    const int true_pref = a > b ? 1 : (a < b ? -1 : 0);
    const double value = true_pref != predicted_pref ? static_cast<double>(true_pref) : 0.0;
    return FeedbackEvent{FeedbackKind::comparative, value, context_a, context_b};
}

double shape_reward(double intrinsic, double feedback_value, double lambda) {
    if (lambda < 0.0) throw ArgumentError("shape_reward: lambda must be >= 0");
    return intrinsic + lambda * feedback_value;
}

RewardModel::RewardModel(int n_states, int n_actions, double learning_rate, double h_max)
    : n_states_(n_states),
      n_actions_(n_actions),
      learning_rate_(learning_rate),
      h_max_(h_max),
      weights_(static_cast<std::size_t>(n_states) * n_actions, 0.0) {
    if (n_states < 1 || n_actions < 1) throw ArgumentError("RewardModel: sizes must be >= 1");
    if (!(learning_rate > 0.0)) throw ArgumentError("RewardModel: learning rate must be > 0");
    if (!(h_max > 0.0)) throw ArgumentError("RewardModel: h_max must be > 0");
}

double RewardModel::raw_weight(int state, int action) const {
    if (state < 0 || state >= n_states_ || action < 0 || action >= n_actions_) {
        throw ArgumentError("RewardModel: feature context out of range");
    }
    return weights_[static_cast<std::size_t>(state) * n_actions_ + action];
}

double RewardModel::predict(int state, int action) const {
    return clip(raw_weight(state, action), h_max_);
}

void RewardModel::step(int state, int action, double target) {
    if (state < 0 || state >= n_states_ || action < 0 || action >= n_actions_) {
        throw ArgumentError("RewardModel: feature context out of range");
    }
    double& w = weights_[static_cast<std::size_t>(state) * n_actions_ + action];
    w += learning_rate_ * (target - w);
}

void RewardModel::update(std::span<const FeedbackEvent> batch) {
    if (batch.empty()) throw ArgumentError("RewardModel::update: empty batch");
    for (const auto& e : batch) {
        switch (e.kind) {
            case FeedbackKind::direct:
                step(e.context_a, e.context_b, e.value);
                break;
            case FeedbackKind::comparative:
                // A nonzero comparison trains the "predict-high" weight of
                // both pair members in opposite directions.
                step(e.context_a, 1, e.value);
                step(e.context_b, 1, -e.value);
                break;
        }
    }
}

RewardModel reward_model_update(RewardModel model, std::span<const FeedbackEvent> batch) {
    model.update(batch);
    return model;
}

TableFeedback::TableFeedback(int n_states, int n_actions, std::vector<double> table, double h_max)
    : n_states_(n_states), n_actions_(n_actions), table_(std::move(table)), h_max_(h_max) {
    if (table_.size() != static_cast<std::size_t>(n_states) * n_actions) {
        throw ArgumentError("TableFeedback: table size mismatch");
    }
    for (double v : table_) {
        if (std::abs(v) > h_max_ + 1e-12) {
            throw ArgumentError("TableFeedback: |H(s,a)| exceeds h_max");
        }
    }
}

std::string feedback_events_csv_header() { return "round,client,kind,context,value\n"; }

std::string feedback_event_csv_row(int round, int client, const FeedbackEvent& event) {
    std::ostringstream out;
    out << round << ',' << client << ','
        << (event.kind == FeedbackKind::direct ? "direct" : "comparative") << ','
        << event.context_a << ':' << event.context_b << ',' << event.value << '\n';
    return out.str();
}

}  // namespace fedrlhf
