#include "fedrlhf/metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fedrlhf/errors.hpp"
#include "fedrlhf/feedback.hpp"
#include "fedrlhf/stats.hpp"

namespace fedrlhf {

namespace {

std::vector<double> rho_for(const PersonalizationInputs& inputs) {
    switch (inputs.rho_kind) {
        case StateDistributionKind::initial:
            return inputs.env->rho0();
        case StateDistributionKind::discounted_visitation:
            return discounted_visitation(*inputs.env, *inputs.client_theta);
    }
    throw ArgumentError("personalization: unknown state distribution");
}

}  // namespace

PersonalizationScore personalization_score_exact(const PersonalizationInputs& inputs) {
    const std::vector<double> rho = rho_for(inputs);
    PersonalizationScore out;
    for (int s = 0; s < inputs.env->n_states(); ++s) {
        if (rho[s] == 0.0) continue;
        const Distribution pk = policy_distribution(*inputs.env, *inputs.client_theta, s);
        const Distribution pg = policy_distribution(*inputs.env, *inputs.global_theta, s);
        try {
            out.value += rho[s] * kl_divergence(pk, pg);
        } catch (const InfiniteDivergenceError&) {
            out.infinite = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
    }
    return out;
}

PersonalizationScore personalization_score_sampled(const PersonalizationInputs& inputs,
                                                   int n_draws, RngStream& rng) {
    if (n_draws < 1) throw ArgumentError("personalization: need >= 1 draw");
    const std::vector<double> rho = rho_for(inputs);
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(n_draws));
    PersonalizationScore out;
    for (int i = 0; i < n_draws; ++i) {
        const int s = rng.next_index(rho.data(), inputs.env->n_states());
        const Distribution pk = policy_distribution(*inputs.env, *inputs.client_theta, s);
        const Distribution pg = policy_distribution(*inputs.env, *inputs.global_theta, s);
        try {
            samples.push_back(kl_divergence(pk, pg));
        } catch (const InfiniteDivergenceError&) {
            out.infinite = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
    }
    const MeanWithError m = mean_with_error(samples);
    out.value = m.mean;
    out.std_error = m.std_error;
    return out;
}

double global_performance(std::span<const EnvironmentSpec* const> clients,
                          const ParameterVector& global_theta) {
    if (clients.empty()) throw ArgumentError("global_performance: no clients");
    double acc = 0.0;
    for (const EnvironmentSpec* env : clients) acc += exact_value(*env, global_theta);
    return acc / static_cast<double>(clients.size());
}

std::pair<double, double> global_performance_sampled(
    std::span<const EnvironmentSpec* const> clients, const ParameterVector& global_theta,
    int rollouts_per_client, int horizon, RngStream& rng) {
    if (clients.empty()) throw ArgumentError("global_performance: no clients");
    if (rollouts_per_client < 1) throw ArgumentError("global_performance: need >= 1 rollout");
    std::vector<double> returns;
    returns.reserve(clients.size() * static_cast<std::size_t>(rollouts_per_client));
    for (const EnvironmentSpec* env : clients) {
        for (int i = 0; i < rollouts_per_client; ++i) {
            const Trajectory traj = rollout(*env, global_theta, horizon, rng);
            returns.push_back(traj.discounted_intrinsic_return(env->gamma()));
        }
    }
    const MeanWithError m = mean_with_error(returns);
    return {m.mean, m.std_error};
}

std::string EvaluationReport::to_json_line() const {
    nlohmann::json j;
    j["round"] = round;
    j["global"] = {{"weighted_accuracy", global_weighted_accuracy},
                   {"j", global_j},
                   {"j_g", global_jg}};
    auto& cs = j["clients"] = nlohmann::json::array();
    for (const auto& c : clients) {
        nlohmann::json e;
        e["client"] = c.client_id;
        e["accuracy"] = c.accuracy;
        if (c.spearman) {
            e["spearman"] = *c.spearman;
        } else {
            e["spearman"] = nullptr;
        }
        e["j"] = c.j_shaped;
        e["j0"] = c.j_intrinsic;
        e["p_k"] = c.personalization_infinite ? nlohmann::json("inf")
                                              : nlohmann::json(c.personalization);
        e["n_examples"] = c.n_examples;
        cs.push_back(std::move(e));
    }
    return j.dump();
}

std::string EvaluationReport::csv_header() { return "round,client,metric,value\n"; }

std::string EvaluationReport::to_csv_rows() const {
    std::ostringstream out;
    auto row = [&](int client, const char* metric, double v) {
        out << round << ',' << client << ',' << metric << ',' << v << '\n';
    };
    for (const auto& c : clients) {
        row(c.client_id, "accuracy", c.accuracy);
        if (c.spearman) row(c.client_id, "spearman", *c.spearman);
        row(c.client_id, "j", c.j_shaped);
        row(c.client_id, "j0", c.j_intrinsic);
        if (!c.personalization_infinite) row(c.client_id, "p_k", c.personalization);
    }
    row(-1, "weighted_accuracy", global_weighted_accuracy);
    row(-1, "j", global_j);
    row(-1, "j_g", global_jg);
    return out.str();
}

EvaluationReport evaluate_round(int round, std::span<const RecommenderClientState> clients) {
    if (clients.empty()) throw ArgumentError("evaluate_round: no clients");
    EvaluationReport report;
    report.round = round;

    double acc_weighted = 0.0;
    std::int64_t total_examples = 0;
    double sum_j = 0.0;
    double sum_jg = 0.0;

    for (const auto& cs : clients) {
        if (cs.data == nullptr || cs.local_theta == nullptr || cs.global_theta == nullptr) {
            throw ArgumentError("evaluate_round: incomplete client state");
        }
        const RecommenderEnv& rec = *cs.data;
        const int n_actions = rec.env.n_actions();

        ClientEvaluation ce;
        ce.client_id = cs.client_id;

        std::vector<double> scores;
        std::vector<double> ratings;
        int correct = 0;
        int total = 0;
        for (const auto& entry : rec.table) {
            if (entry.train) continue;
            const int s = rec.state_of(entry.user, entry.item);
            const double margin =
                (*cs.local_theta)[static_cast<std::size_t>(s) * n_actions +
                                  RecommenderEnv::kPredictHigh] -
                (*cs.local_theta)[static_cast<std::size_t>(s) * n_actions +
                                  RecommenderEnv::kPredictLow];
            const int predicted = margin > 0.0 ? 1 : 0;
            correct += predicted == entry.label ? 1 : 0;
            ++total;
            scores.push_back(margin);
            ratings.push_back(entry.rating);
        }
        if (total == 0) {
            throw ArgumentError("evaluate_round: client " + std::to_string(cs.client_id) +
                                " has an empty evaluation set");
        }
        ce.n_examples = total;
        ce.accuracy = static_cast<double>(correct) / total;
        try {
            ce.spearman = spearman_rank_correlation(scores, ratings);
        } catch (const UndefinedCorrelationError&) {
            ce.spearman = std::nullopt;
        }

        ce.j_intrinsic = exact_value(rec.env, *cs.global_theta);
        if (cs.lambda > 0.0 && cs.feedback != nullptr) {
            std::vector<double> shaped = rec.env.reward_table();
            for (int s = 0; s < rec.env.n_states(); ++s) {
                for (int a = 0; a < n_actions; ++a) {
                    shaped[static_cast<std::size_t>(s) * n_actions + a] = shape_reward(
                        rec.env.reward(s, a), cs.feedback->h(s, a), cs.lambda);
                }
            }
            ce.j_shaped = exact_value_with_reward(rec.env, *cs.global_theta, shaped);
        } else {
            ce.j_shaped = ce.j_intrinsic;
        }

        // The tabular Q-values form the policy logits of record: greedy in
        // Q corresponds to the softmax policy sharpening around the same
        // margins, so P_k is computed on the Q-tables directly.
        PersonalizationInputs pi{&rec.env, cs.local_theta, cs.global_theta,
                                 StateDistributionKind::initial};
        const PersonalizationScore ps = personalization_score_exact(pi);
        ce.personalization = ps.value;
        ce.personalization_infinite = ps.infinite;

        acc_weighted += ce.accuracy * total;
        total_examples += total;
        sum_j += ce.j_shaped;
        sum_jg += ce.j_intrinsic;
        report.clients.push_back(std::move(ce));
    }

    report.global_weighted_accuracy = acc_weighted / static_cast<double>(total_examples);
    report.global_j = sum_j / static_cast<double>(clients.size());
    report.global_jg = sum_jg / static_cast<double>(clients.size());
    return report;
}

}  // namespace fedrlhf
