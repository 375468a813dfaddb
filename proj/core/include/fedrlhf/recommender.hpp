#pragma once

#include <string>
#include <vector>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/rng.hpp"

namespace fedrlhf {

struct RatingsEntry {
    int user;
    int item;
    double rating;  // in [1, 5]
    int label;      // 1 iff rating >= 4 ("high")
    bool train;     // false => held out for evaluation
};

/**
 * Synthetic recommendation task: one client's users rate items through a
 * latent-factor model, r(u, i) = clip(u . v_i + 3 + noise, 1, 5). The policy
 * sees a contextual bandit over (user, genre) states with two actions
 * (0 = predict-low, 1 = predict-high); intrinsic reward is the expected
 * +1/-1 correctness over the training items of that bucket, and contexts are
 * drawn iid from the training-pair marginal.
 */
struct RecommenderEnv {
    EnvironmentSpec env;
    std::vector<RatingsEntry> table;  // all (user, item) pairs
    int n_users;
    int n_items;
    int n_genres;
    std::vector<int> item_genre;  // item -> genre in [0, n_genres)

    static constexpr int kPredictLow = 0;
    static constexpr int kPredictHigh = 1;

    int state_of(int user, int item) const { return user * n_genres + item_genre[item]; }

    /// CSV export: header user_id,item_id,rating,label.
    std::string ratings_csv() const;
};

/// Ratings from explicit latent vectors; `user_latents` is n_users x latent_dim
/// and `item_latents` is n_items x latent_dim, both row-major. Exposed so tests
/// can force specific ratings.
RecommenderEnv build_recommender_env(const std::vector<double>& user_latents,
                                     const std::vector<double>& item_latents, int n_users,
                                     int n_items, int latent_dim, double noise_sd, RngStream& rng,
                                     double gamma = 0.5, double train_fraction = 0.8);

/**
 * Random instance. Items carry one dominant latent axis (their "genre",
 * item i's axis is i mod latent_dim with magnitude in [0.5, 1.5]); user
 * latents are uniform on [-2, 2]^latent_dim. Distinct rng streams give
 * distinct clients with a shared (state, action) shape.
 */
RecommenderEnv make_recommender_env(int n_users_per_client, int n_items, int latent_dim,
                                    double noise_sd, RngStream& rng, double gamma = 0.5,
                                    double train_fraction = 0.8);

}  // namespace fedrlhf
