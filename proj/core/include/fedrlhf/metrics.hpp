#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/local_learner.hpp"
#include "fedrlhf/parameter_vector.hpp"
#include "fedrlhf/recommender.hpp"
#include "fedrlhf/rng.hpp"

namespace fedrlhf {

/// Which state distribution rho the personalization score integrates over.
/// The default is the initial distribution; the discounted visitation of the
/// client policy is the opt-in alternative.
enum class StateDistributionKind { initial, discounted_visitation };

struct PersonalizationInputs {
    const EnvironmentSpec* env;
    const ParameterVector* client_theta;
    const ParameterVector* global_theta;
    StateDistributionKind rho_kind = StateDistributionKind::initial;
};

/// P_k(theta) = E_{s~rho}[KL(pi_k(.|s) || pi(.|s))]. An infinite KL on a
/// reachable state flags the result instead of throwing.
struct PersonalizationScore {
    double value = 0.0;
    double std_error = 0.0;  // zero in exact mode
    bool infinite = false;
};

PersonalizationScore personalization_score_exact(const PersonalizationInputs& inputs);
PersonalizationScore personalization_score_sampled(const PersonalizationInputs& inputs, int n_draws,
                                                   RngStream& rng);

/// J_g(theta) = (1/K) sum_k J_k^0(pi_theta): average exact intrinsic value of
/// the shared policy across client MDPs. Shaping never enters the metric.
double global_performance(std::span<const EnvironmentSpec* const> clients,
                          const ParameterVector& global_theta);

/// Monte-Carlo variant; returns (estimate, standard error).
std::pair<double, double> global_performance_sampled(
    std::span<const EnvironmentSpec* const> clients, const ParameterVector& global_theta,
    int rollouts_per_client, int horizon, RngStream& rng);

struct ClientEvaluation {
    int client_id = 0;
    double accuracy = 0.0;
    std::optional<double> spearman;  // absent when rank variance is zero
    double j_shaped = 0.0;           // J_k of the global policy, shaped rewards
    double j_intrinsic = 0.0;        // J_k^0 of the global policy
    double personalization = 0.0;    // P_k, exact
    bool personalization_infinite = false;
    int n_examples = 0;  // evaluation-set size (accuracy weight)
};

struct EvaluationReport {
    int round = 0;
    std::vector<ClientEvaluation> clients;
    double global_weighted_accuracy = 0.0;  // sum n_k acc_k / sum n_k
    double global_j = 0.0;                  // mean shaped J_k
    double global_jg = 0.0;                 // Definition-5.3 metric

    std::string to_json_line() const;
    /// Wide format rows: round,client,metric,value ("global" client rows use -1).
    std::string to_csv_rows() const;
    static std::string csv_header();
};

/// Evaluation inputs for one recommender client.
struct RecommenderClientState {
    int client_id = 0;
    const RecommenderEnv* data = nullptr;
    const ParameterVector* local_theta = nullptr;   // personalized parameters
    const ParameterVector* global_theta = nullptr;  // broadcast parameters
    double lambda = 0.0;
    const FeedbackSource* feedback = nullptr;  // for the shaped J_k; may be null
};

/**
 * Scores every held-out (user, item) pair with the Q-value margin
 * q(s, high) - q(s, low) of the client's personalized table, derives
 * predictions (margin > 0 => "high"), and fills the full report: per-client
 * accuracy / Spearman / J_k / J_k^0 / P_k plus the weighted global rows.
 * Throws ArgumentError when a client has an empty evaluation set.
 */
EvaluationReport evaluate_round(int round, std::span<const RecommenderClientState> clients);

}  // namespace fedrlhf
