#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/federation.hpp"
#include "fedrlhf/local_learner.hpp"
#include "fedrlhf/theory.hpp"

namespace fedrlhf {

enum class Scenario { quadratic_bounds, recommender, lambda_sweep, centralized_equiv };
enum class TransportKind { inproc, socket };

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);

/// Quadratic-family knobs (bound validation and centralized equivalence).
struct QuadraticScenarioParams {
    int dim = 20;
    double eig_lo = 0.5;
    double eig_hi = 2.0;
    std::uint64_t family_seed = 7;  // the instance is fixed; seeds vary noise only
    double noise_sd = 1.0;          // sqrt(sigma^2) injected on each gradient
    double clip_g = 10.0;           // gradient clipping bound G
    double pull_h_max = 1.0;        // H_max of the bounded feedback pull
    std::vector<int> k_grid = {1, 5, 10};
    std::vector<double> lambda_grid = {0.0, 0.05};
    std::vector<double> drift_etas;  // Lemma-1 grid; empty disables the check
    std::vector<int> drift_taus;
    int drift_seeds = 1000;
};

/// Synthetic recommendation scenario knobs.
struct RecommenderScenarioParams {
    int users_per_client = 5;
    int items = 60;
    int latent_dim = 6;
    /// Weight of the cross-client shared taste component in user latents:
    /// u_k = w * u_common + (1 - w) * u_personal. Aggregation transfers the
    /// shared signal; the personal remainder is what personalization is for.
    double user_common_weight = 0.7;
    double noise_sd = 0.3;
    double gamma = 0.5;
    double train_fraction = 0.8;
    double feedback_noise_sd = 0.1;
    double feedback_threshold = 0.5;
    double h_max = 1.0;
    int direct_per_step = 1;
    int pairs_per_batch = 4;
    double reward_model_lr = 0.03;
    double accuracy_gain_points = 8.0;  // embedded trend assertion, in percentage points
    int min_passing_seeds = 4;
};

/// Feedback-pull family knobs (lambda sweep).
struct SweepScenarioParams {
    int states = 4;
    int actions = 3;
    double gamma = 0.8;
    double h_max = 1.0;
    double epsilon_fraction = 0.5;  // samples-to-eps target, see lambda_sweep
    double slope_lo = 1.7;          // embedded assertion window for the P_k slope
    double slope_hi = 2.3;
    double jg_r2_min = 0.9;
};

struct ExperimentConfig {
    int version = 1;
    Scenario scenario = Scenario::recommender;
    int k = 1;
    int t = 1;
    AggregationStrategy strategy;
    TransportKind transport = TransportKind::inproc;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;
    LocalConfig local;
    std::vector<double> client_lambdas;  // per-client lambda_k (empty: local.lambda for all)
    std::vector<double> sweep_lambdas;   // lambda grid for sweep scenarios

    QuadraticScenarioParams quadratic;
    RecommenderScenarioParams recommender;
    SweepScenarioParams sweep;

    void validate() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
};

struct ScenarioAssertion {
    std::string name;
    bool passed;
    std::string detail;
};

struct ScenarioOutcome {
    bool all_passed = true;
    std::vector<ScenarioAssertion> assertions;
    std::string summary_json;
};

/**
 * Runs the configured scenario over all seeds, writes round records,
 * evaluation reports and summary.json under output_dir (atomically, byte
 * reproducible; wall-clock only in the sidecar run.log), and returns the
 * embedded assertion outcomes. output_dir empty means "no files".
 */
ScenarioOutcome run_scenario(const ExperimentConfig& cfg);

/// One evaluated lambda grid point plus the raw per-seed measurements.
struct SweepPoint {
    SweepRow row;  // lambda, mean P_k, J_g, mean samples-to-eps
    std::vector<double> per_seed_personalization;
    std::vector<double> per_seed_jg;
    std::vector<double> per_seed_samples;
};

struct SweepResult {
    std::vector<SweepPoint> points;  // sorted by lambda
    RateRegression regression;      // valid only when regression_valid
    bool regression_valid = false;  // grid must be all-positive, >= 5 points, >= a decade
};

/**
 * Lambda sweep on the feedback-pull family: for each lambda in the grid and
 * each seed, trains K policy-gradient clients to T rounds and records the
 * exact mean personalization score, the intrinsic global performance and the
 * samples consumed until the intrinsic target is reached. Clients share
 * round rng streams (common random numbers), so with lambda = 0 every client
 * reproduces the aggregate exactly and P_k == 0; feedback is then the only
 * source of client divergence.
 */
SweepResult lambda_sweep(const ExperimentConfig& base, std::span<const double> lambda_grid,
                         std::span<const std::uint64_t> seeds);

/**
 * The controlled family behind the sweep: one shared MDP per instance and a
 * client-specific bounded feedback table H_k = h_max (bias + personal_k)/2
 * with bias/personal entries +-1. The shared bias displaces the aggregate as
 * lambda grows (global performance drops); the personal parts displace each
 * client's local optimum in its own direction (personalization grows).
 */
struct FeedbackPullInstance {
    EnvironmentSpec env;
    std::vector<std::vector<double>> client_feedback;  // K tables over (s, a)
    double h_max;
};

FeedbackPullInstance make_feedback_pull_instance(int n_states, int n_actions, int n_clients,
                                                 double h_max, double gamma, RngStream& rng);

/// Plain SGD reference trajectory: theta_{t+1} = theta_t + eta g_hat, with
/// round t drawing from rng_base.substream(t) exactly like a federated
/// client. Returns theta after each step (size `steps`).
std::vector<ParameterVector> centralized_sgd(const ParameterVector& init, GradientSource& source,
                                             const LocalConfig& cfg, int steps,
                                             RngStream rng_base);

/// Writes content to path via a temp file + rename in the same directory.
void write_file_atomic(const std::string& path, const std::string& content);

/// Runs fn(0..n-1) on a small worker pool; rethrows the first failure.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned max_workers = 0);

}  // namespace fedrlhf
