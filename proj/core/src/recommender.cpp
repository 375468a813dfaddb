#include "fedrlhf/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedrlhf/errors.hpp"

namespace fedrlhf {

namespace {

double clip_rating(double r) { return std::min(5.0, std::max(1.0, r)); }

}  // namespace

std::string RecommenderEnv::ratings_csv() const {
    std::ostringstream out;
    out << "user_id,item_id,rating,label\n";
    for (const auto& e : table) {
        out << e.user << ',' << e.item << ',' << e.rating << ',' << e.label << '\n';
    }
    return out.str();
}

RecommenderEnv build_recommender_env(const std::vector<double>& user_latents,
                                     const std::vector<double>& item_latents, int n_users,
                                     int n_items, int latent_dim, double noise_sd, RngStream& rng,
                                     double gamma, double train_fraction) {
    if (n_users < 1 || n_items < 1 || latent_dim < 1) {
        throw ArgumentError("recommender: all sizes must be >= 1");
    }
    if (noise_sd < 0.0) throw ArgumentError("recommender: noise_sd must be >= 0");
    if (user_latents.size() != static_cast<std::size_t>(n_users) * latent_dim ||
        item_latents.size() != static_cast<std::size_t>(n_items) * latent_dim) {
        throw ArgumentError("recommender: latent matrix size mismatch");
    }

    const int n_genres = latent_dim;
    std::vector<int> item_genre(n_items);
    for (int i = 0; i < n_items; ++i) {
        // dominant axis of the item's latent vector
        int best = 0;
        double best_abs = -1.0;
        for (int d = 0; d < latent_dim; ++d) {
            const double a = std::abs(item_latents[static_cast<std::size_t>(i) * latent_dim + d]);
            if (a > best_abs) {
                best_abs = a;
                best = d;
            }
        }
        item_genre[i] = best;
    }

    std::vector<RatingsEntry> table;
    table.reserve(static_cast<std::size_t>(n_users) * n_items);
    for (int u = 0; u < n_users; ++u) {
        for (int i = 0; i < n_items; ++i) {
            double dot = 0.0;
            for (int d = 0; d < latent_dim; ++d) {
                dot += user_latents[static_cast<std::size_t>(u) * latent_dim + d] *
                       item_latents[static_cast<std::size_t>(i) * latent_dim + d];
            }
            const double noise = noise_sd > 0.0 ? noise_sd * rng.next_gaussian() : 0.0;
            const double rating = clip_rating(dot + 3.0 + noise);
            table.push_back({u, i, rating, rating >= 4.0 ? 1 : 0, true});
        }
    }

    // Per-user 80/20 split: shuffle that user's items, hold out the tail.
    for (int u = 0; u < n_users; ++u) {
        std::vector<int> items(n_items);
        std::iota(items.begin(), items.end(), 0);
        for (int i = n_items - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(items[i], items[j]);
        }
        const int n_train = std::max(1, static_cast<int>(std::floor(train_fraction * n_items)));
        for (int idx = n_train; idx < n_items; ++idx) {
            table[static_cast<std::size_t>(u) * n_items + items[idx]].train = false;
        }
    }

    const int n_states = n_users * n_genres;
    const int n_actions = 2;

    // Training-pair counts and high-label fractions per (user, genre) bucket.
    std::vector<int> bucket_count(n_states, 0);
    std::vector<int> bucket_high(n_states, 0);
    int total_train = 0;
    for (const auto& e : table) {
        if (!e.train) continue;
        const int s = e.user * n_genres + item_genre[e.item];
        ++bucket_count[s];
        bucket_high[s] += e.label;
        ++total_train;
    }

    std::vector<double> reward(static_cast<std::size_t>(n_states) * n_actions, 0.0);
    std::vector<double> context_dist(n_states, 0.0);
    for (int s = 0; s < n_states; ++s) {
        if (bucket_count[s] > 0) {
            const double p_high = static_cast<double>(bucket_high[s]) / bucket_count[s];
            reward[static_cast<std::size_t>(s) * n_actions + RecommenderEnv::kPredictHigh] =
                2.0 * p_high - 1.0;
            reward[static_cast<std::size_t>(s) * n_actions + RecommenderEnv::kPredictLow] =
                1.0 - 2.0 * p_high;
            context_dist[s] = static_cast<double>(bucket_count[s]) / total_train;
        }
    }
    // Contexts are iid: every (s, a) row is the training-pair marginal.
    std::vector<double> transition(static_cast<std::size_t>(n_states) * n_actions * n_states);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            std::copy(context_dist.begin(), context_dist.end(),
                      transition.begin() +
                          (static_cast<std::size_t>(s) * n_actions + a) * n_states);
        }
    }

    RecommenderEnv out{
        EnvironmentSpec(n_states, n_actions, std::move(transition), std::move(reward),
                        context_dist, gamma, 1.0),
        std::move(table), n_users, n_items, n_genres, std::move(item_genre)};
    return out;
}

RecommenderEnv make_recommender_env(int n_users_per_client, int n_items, int latent_dim,
                                    double noise_sd, RngStream& rng, double gamma,
                                    double train_fraction) {
    if (n_users_per_client < 1 || n_items < 1 || latent_dim < 1) {
        throw ArgumentError("recommender: all sizes must be >= 1");
    }
    std::vector<double> user_latents(static_cast<std::size_t>(n_users_per_client) * latent_dim);
    for (double& x : user_latents) x = -2.0 + 4.0 * rng.next_double();
    std::vector<double> item_latents(static_cast<std::size_t>(n_items) * latent_dim, 0.0);
    for (int i = 0; i < n_items; ++i) {
        const int g = i % latent_dim;
        item_latents[static_cast<std::size_t>(i) * latent_dim + g] = 0.5 + rng.next_double();
    }
    return build_recommender_env(user_latents, item_latents, n_users_per_client, n_items,
                                 latent_dim, noise_sd, rng, gamma, train_fraction);
}

}  // namespace fedrlhf
