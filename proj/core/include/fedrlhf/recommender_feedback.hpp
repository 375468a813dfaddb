#pragma once

#include <vector>

#include "fedrlhf/feedback.hpp"
#include "fedrlhf/recommender.hpp"

namespace fedrlhf {

/**
 * Rule-based feedback oracle for the synthetic recommendation task. Per
 * observed batch it emits
 *  - direct feedback: for each visited (state, action) it samples a concrete
 *    training item from that bucket, maps the taken action to a predicted
 *    rating (predict-high ~ 4.5, predict-low ~ 2.5) and grades it against
 *    the item's noisy true rating;
 *  - comparative feedback: `pairs_per_batch` random same-user item pairs,
 *    graded against the model's preference read off the current Q-value
 *    margins.
 * The resulting events train the client's linear reward model, whose clipped
 * prediction is the bounded feedback signal h(s, a).
 */
class RecommenderFeedbackOracle final : public FeedbackSource {
public:
    struct Options {
        FeedbackOracleConfig oracle;   // noise_sd, threshold, h_max
        int direct_per_step = 1;       // direct events per visited step
        int pairs_per_batch = 4;       // comparative events per observe() call
        double reward_model_lr = 0.05;
        double predicted_high_rating = 4.5;
        double predicted_low_rating = 2.5;
    };

    RecommenderFeedbackOracle(const RecommenderEnv& data, Options opts);

    double h(int state, int action) const override { return model_.predict(state, action); }
    double h_max() const override { return opts_.oracle.h_max; }
    void observe(std::span<const Trajectory> batch, const ParameterVector& current_params,
                 RngStream& rng) override;

    const RewardModel& reward_model() const { return model_; }

    /// Events collected since the last drain (for CSV logging).
    std::vector<FeedbackEvent> drain_events();

private:
    const RecommenderEnv* data_;
    Options opts_;
    RewardModel model_;
    std::vector<FeedbackEvent> event_log_;
    // Per-bucket and per-user training item indices, precomputed.
    std::vector<std::vector<int>> bucket_train_items_;  // state -> table indices
    std::vector<std::vector<int>> user_train_items_;    // user -> table indices
};

}  // namespace fedrlhf
