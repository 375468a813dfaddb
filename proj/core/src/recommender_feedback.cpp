#include "fedrlhf/recommender_feedback.hpp"

#include <cmath>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

RecommenderFeedbackOracle::RecommenderFeedbackOracle(const RecommenderEnv& data, Options opts)
    : data_(&data),
      opts_(opts),
      model_(data.env.n_states(), data.env.n_actions(), opts.reward_model_lr,
             opts.oracle.h_max) {
    opts_.oracle.validate();
    if (opts_.direct_per_step < 0 || opts_.pairs_per_batch < 0) {
        throw ArgumentError("RecommenderFeedbackOracle: event counts must be >= 0");
    }
    bucket_train_items_.resize(static_cast<std::size_t>(data.env.n_states()));
    user_train_items_.resize(static_cast<std::size_t>(data.n_users));
    for (std::size_t idx = 0; idx < data.table.size(); ++idx) {
        const auto& e = data.table[idx];
        if (!e.train) continue;
        bucket_train_items_[static_cast<std::size_t>(data.state_of(e.user, e.item))].push_back(
            static_cast<int>(idx));
        user_train_items_[static_cast<std::size_t>(e.user)].push_back(static_cast<int>(idx));
    }
}

void RecommenderFeedbackOracle::observe(std::span<const Trajectory> batch,
                                        const ParameterVector& current_params, RngStream& rng) {
    const int n_actions = data_->env.n_actions();
    auto margin = [&](int state) {
        return current_params[static_cast<std::size_t>(state) * n_actions +
                              RecommenderEnv::kPredictHigh] -
               current_params[static_cast<std::size_t>(state) * n_actions +
                              RecommenderEnv::kPredictLow];
    };

    std::vector<FeedbackEvent> events;
    for (const auto& traj : batch) {
        for (const auto& step : traj.steps) {
            const auto& items = bucket_train_items_[static_cast<std::size_t>(step.state)];
            if (items.empty()) continue;
            for (int d = 0; d < opts_.direct_per_step; ++d) {
                const auto& entry =
                    data_->table[static_cast<std::size_t>(items[rng.next_below(items.size())])];
                const double predicted = step.action == RecommenderEnv::kPredictHigh
                                             ? opts_.predicted_high_rating
                                             : opts_.predicted_low_rating;
                events.push_back(direct_feedback(predicted, entry.rating, opts_.oracle, rng,
                                                 step.state, step.action));
            }
        }
    }

    if (opts_.pairs_per_batch > 0 && !batch.empty() && !batch[0].steps.empty()) {
        for (int p = 0; p < opts_.pairs_per_batch; ++p) {
            // Anchor the pair on a random visited step's user.
            const auto& traj = batch[rng.next_below(batch.size())];
            const auto& step = traj.steps[rng.next_below(traj.steps.size())];
            const int user = step.state / data_->n_genres;
            const auto& items = user_train_items_[static_cast<std::size_t>(user)];
            if (items.size() < 2) continue;
            const int ia = items[rng.next_below(items.size())];
            int ib = items[rng.next_below(items.size())];
            if (ib == ia) ib = items[(rng.next_below(items.size() - 1) + 1) % items.size()];
            const auto& ea = data_->table[static_cast<std::size_t>(ia)];
            const auto& eb = data_->table[static_cast<std::size_t>(ib)];
            if (ia == ib || (ea.user == eb.user && ea.item == eb.item)) continue;
            const int sa = data_->state_of(ea.user, ea.item);
            const int sb = data_->state_of(eb.user, eb.item);
            const double diff = margin(sa) - margin(sb);
            const int predicted_pref = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
            events.push_back(comparative_feedback(ea.rating, eb.rating, predicted_pref, rng,
                                                  opts_.oracle.noise_sd, sa, sb));
        }
    }

    if (!events.empty()) {
        model_.update(events);
        event_log_.insert(event_log_.end(), events.begin(), events.end());
    }
}

std::vector<FeedbackEvent> RecommenderFeedbackOracle::drain_events() {
    std::vector<FeedbackEvent> out;
    out.swap(event_log_);
    return out;
}

}  // namespace fedrlhf
