// Acceptance suite: every release criterion as one pass/fail line, with the
// tolerances pinned in code. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/experiment.hpp"
#include "fedrlhf/local_learner.hpp"
#include "fedrlhf/metrics.hpp"
#include "fedrlhf/theory.hpp"
#include "fedrlhf/wire.hpp"

using namespace fedrlhf;

namespace {

struct CriterionResult {
    int id;
    std::string name;
    bool passed;
    std::string detail;
    double seconds;
};

std::vector<CriterionResult> g_results;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void record(int id, const std::string& name, bool passed, const std::string& detail,
            double seconds) {
    g_results.push_back({id, name, passed, detail, seconds});
}

EnvironmentSpec random_env(int n, int m, double gamma, RngStream& rng) {
    std::vector<double> transition(static_cast<std::size_t>(n) * m * n);
    for (std::size_t row = 0; row < static_cast<std::size_t>(n) * m; ++row) {
        double sum = 0.0;
        for (int s2 = 0; s2 < n; ++s2) {
            transition[row * n + s2] = 0.05 + rng.next_double();
            sum += transition[row * n + s2];
        }
        for (int s2 = 0; s2 < n; ++s2) transition[row * n + s2] /= sum;
    }
    std::vector<double> reward(static_cast<std::size_t>(n) * m);
    for (double& r : reward) r = -1.0 + 2.0 * rng.next_double();
    return EnvironmentSpec(n, m, std::move(transition), std::move(reward),
                           std::vector<double>(n, 1.0 / n), gamma);
}

// --- criteria 1 and 5: Theorem-1 bound and Lemma-1 drift on the quadratic
// --- PL family (d = 20, known constants, eta = 1/(L tau), tau = 5)

void criteria_theorem1_and_lemma1() {
    Timer timer;
    ExperimentConfig cfg;
    cfg.scenario = Scenario::quadratic_bounds;
    cfg.t = 200;
    for (int i = 0; i < 100; ++i) cfg.seeds.push_back(static_cast<std::uint64_t>(i));
    cfg.local.tau = 5;
    cfg.quadratic.dim = 20;
    cfg.quadratic.eig_lo = 0.5;
    cfg.quadratic.eig_hi = 2.0;
    cfg.quadratic.family_seed = 7;
    cfg.quadratic.noise_sd = 1.0;  // sigma^2 = 1
    cfg.quadratic.clip_g = 6.0;    // G
    cfg.quadratic.k_grid = {1, 5, 10};
    cfg.quadratic.lambda_grid = {0.0, 0.05};
    cfg.quadratic.drift_etas = {0.01, 0.02, 0.05, 0.1};
    cfg.quadratic.drift_taus = {1, 2, 5, 10};
    cfg.quadratic.drift_seeds = 1000;

    const ScenarioOutcome outcome = run_scenario(cfg);
    int theorem1_failures = 0, theorem1_total = 0;
    int lemma1_failures = 0, lemma1_total = 0;
    double worst_ratio = 0.0;
    for (const auto& a : outcome.assertions) {
        if (a.name.rfind("theorem1", 0) == 0) {
            ++theorem1_total;
            if (!a.passed) ++theorem1_failures;
            const auto pos = a.detail.find("worst_ratio=");
            if (pos != std::string::npos) {
                worst_ratio = std::max(worst_ratio, std::stod(a.detail.substr(pos + 12)));
            }
        } else if (a.name.rfind("lemma1", 0) == 0) {
            ++lemma1_total;
            if (!a.passed) ++lemma1_failures;
        }
    }
    const double elapsed = timer.seconds();
    record(1, "Theorem-1 convergence bound holds on every (K, lambda, T) cell",
           theorem1_failures == 0 && theorem1_total == 6 && elapsed < 120.0,
           "6 (K,lambda) combos x T=1..200, 100 seeds, zero violations, worst measured/bound = " +
               std::to_string(worst_ratio),
           elapsed);
    record(5, "Lemma-1 drift bound holds on the 4x4 (eta, tau) grid",
           lemma1_failures == 0 && lemma1_total == 16,
           "16 cells x 1000 seeds, zero violations", elapsed);
}

// --- criterion 2: K = 1, tau = 1 federation reproduces centralized SGD

void criterion_centralized_equivalence() {
    Timer timer;
    ExperimentConfig cfg;
    cfg.scenario = Scenario::centralized_equiv;
    cfg.k = 1;
    cfg.t = 1000;
    cfg.seeds = {42};
    cfg.local.tau = 1;
    cfg.local.eta = 0.05;
    cfg.quadratic.dim = 10;
    cfg.quadratic.eig_lo = 0.5;
    cfg.quadratic.eig_hi = 2.0;
    cfg.quadratic.family_seed = 7;
    cfg.quadratic.noise_sd = 1.0;
    cfg.quadratic.clip_g = 6.0;
    const ScenarioOutcome outcome = run_scenario(cfg);
    record(2, "centralized equivalence: bitwise identical over 1000 steps", outcome.all_passed,
           "K=1, tau=1, uniform FedAvg vs plain SGD, shared seed 42", timer.seconds());
}

// --- criterion 3: Theorem-3 trade-off inequality on random small MDPs

void criterion_tradeoff_inequality() {
    Timer timer;
    int violations = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    for (int instance = 0; instance < 100; ++instance) {
        RngStream rng(3000 + static_cast<std::uint64_t>(instance), 0);
        const int n = 2 + static_cast<int>(rng.next_below(7));  // <= 8 states
        const int m = 2 + static_cast<int>(rng.next_below(3));  // <= 4 actions
        const int k_clients = 2 + static_cast<int>(rng.next_below(4));
        const double gamma = 0.9;
        const double lambda = rng.next_double();

        std::vector<EnvironmentSpec> envs;
        for (int k = 0; k < k_clients; ++k) envs.push_back(random_env(n, m, gamma, rng));

        ParameterVector global(static_cast<std::size_t>(n) * m);
        for (std::size_t i = 0; i < global.dim(); ++i) global[i] = 1.5 * rng.next_gaussian();

        TradeoffInputs inputs;
        inputs.gamma = gamma;
        inputs.r_total_max = 1.0 + lambda * 1.0;  // R_max = 1, H_max = 1
        double j_g = 0.0;
        for (int k = 0; k < k_clients; ++k) {
            ParameterVector local = global;
            for (std::size_t i = 0; i < local.dim(); ++i) local[i] += 0.8 * rng.next_gaussian();
            inputs.client_j0.push_back(exact_value(envs[static_cast<std::size_t>(k)], local));
            PersonalizationInputs pi{&envs[static_cast<std::size_t>(k)], &local, &global,
                                     StateDistributionKind::initial};
            inputs.personalization.push_back(personalization_score_exact(pi).value);
            j_g += exact_value(envs[static_cast<std::size_t>(k)], global);
        }
        j_g /= k_clients;
        const double bound = tradeoff_lower_bound(inputs);
        if (j_g < bound) ++violations;
        min_slack = std::min(min_slack, j_g - bound);
    }
    const double elapsed = timer.seconds();
    record(3, "Theorem-3 inequality J_g >= lower bound on 100 exact MDP instances",
           violations == 0 && elapsed < 60.0,
           "zero violations, minimum slack " + std::to_string(min_slack), elapsed);
}

// --- criterion 4: Theorem-4 rates from the lambda sweep

void criterion_lambda_sweep_rates() {
    Timer timer;
    ExperimentConfig cfg;
    cfg.scenario = Scenario::lambda_sweep;
    cfg.k = 6;
    cfg.t = 25;
    for (int i = 0; i < 20; ++i) cfg.seeds.push_back(static_cast<std::uint64_t>(i));
    cfg.local.tau = 4;
    cfg.local.eta = 0.05;
    cfg.local.batch_size = 8;
    cfg.local.horizon = 64;
    cfg.sweep.states = 4;
    cfg.sweep.actions = 3;
    cfg.sweep.gamma = 0.8;
    cfg.sweep.h_max = 1.0;
    cfg.sweep.epsilon_fraction = 0.5;
    cfg.sweep.slope_lo = 1.7;
    cfg.sweep.slope_hi = 2.3;
    cfg.sweep.jg_r2_min = 0.9;
    cfg.sweep_lambdas = {0.05, 0.1, 0.2, 0.4, 0.8};

    const ScenarioOutcome outcome = run_scenario(cfg);
    std::string detail;
    for (const auto& a : outcome.assertions) {
        detail += a.name + "(" + (a.passed ? "ok" : "FAIL") + "; " + a.detail + ") ";
    }
    const double elapsed = timer.seconds();
    record(4, "Theorem-4 rates: P_k ~ lambda^2, J_g linear decrease, samples nondecreasing",
           outcome.all_passed && elapsed < 300.0, detail, elapsed);
}

// --- criterion 6: REINFORCE estimator vs central finite differences

void criterion_gradient_correctness() {
    Timer timer;
    RngStream env_rng(5, 0);
    const EnvironmentSpec env = random_env(3, 2, 0.8, env_rng);
    ParameterVector theta(env.policy_dim());
    for (std::size_t i = 0; i < theta.dim(); ++i) {
        theta[i] = 0.6 * (2.0 * env_rng.next_double() - 1.0);
    }
    std::vector<double> h_table(env.policy_dim());
    for (double& h : h_table) h = env_rng.next_double() < 0.5 ? -1.0 : 1.0;
    TableFeedback feedback(3, 2, h_table, 1.0);
    const double lambda = 0.5;

    LocalConfig cfg;
    cfg.batch_size = 1;
    cfg.horizon = 64;
    cfg.lambda = lambda;

    const int n_traj = 100000;
    ParameterVector mean(theta.dim());
    RngStream rng(1005, 0);
    for (int i = 0; i < n_traj; ++i) {
        auto [g, _] = estimate_policy_gradient(theta, env, feedback, cfg, rng);
        mean += g;
    }
    mean *= 1.0 / n_traj;

    std::vector<double> shaped(env.policy_dim());
    for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 2; ++a) {
            shaped[static_cast<std::size_t>(s) * 2 + a] =
                env.reward(s, a) + lambda * feedback.h(s, a);
        }
    }
    const double h = 1e-5;
    double worst_rel = 0.0;
    for (std::size_t i = 0; i < theta.dim(); ++i) {
        ParameterVector plus = theta, minus = theta;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (exact_value_with_reward(env, plus, shaped) -
                           exact_value_with_reward(env, minus, shaped)) /
                          (2.0 * h);
        worst_rel = std::max(worst_rel, std::abs(mean[i] - fd) / std::abs(fd));
    }
    record(6, "REINFORCE mean over 1e5 trajectories matches finite differences per coordinate",
           worst_rel <= 0.02, "worst per-coordinate relative error " + std::to_string(worst_rel),
           timer.seconds());
}

// --- criterion 7: transport equivalence and wire round trips

void criterion_transport_equivalence() {
    Timer timer;
    ExperimentConfig cfg;
    cfg.scenario = Scenario::recommender;
    cfg.k = 5;
    cfg.t = 5;
    cfg.strategy = AggregationStrategy::parse("fedavg_weighted");
    cfg.transport = TransportKind::socket;
    cfg.seeds = {0};
    cfg.local.learner_kind = LearnerKind::q_learning;
    cfg.local.tau = 2;
    cfg.local.batch_size = 10;
    cfg.local.eta = 0.1;
    cfg.local.q_alpha = 0.02;
    cfg.local.q_epsilon = 0.3;
    cfg.local.lambda = 1.0;
    cfg.recommender.min_passing_seeds = 0;  // only the transport assertion matters here

    const ScenarioOutcome outcome = run_scenario(cfg);
    bool transport_ok = false;
    for (const auto& a : outcome.assertions) {
        if (a.name == "transport_equivalence") transport_ok = a.passed;
    }

    // decode(encode(m)) = m over random frames of every message type
    RngStream rng(7007, 0);
    bool roundtrip_ok = true;
    for (int i = 0; i < 10000 && roundtrip_ok; ++i) {
        WireMessage msg = Shutdown{};
        switch (rng.next_below(4)) {
            case 0: {
                const int dim = static_cast<int>(rng.next_below(30));
                std::vector<double> v(static_cast<std::size_t>(dim));
                for (double& x : v) x = 1e3 * rng.next_gaussian();
                msg = RoundBroadcast{static_cast<std::uint32_t>(rng.next_below(10000)),
                                     ParameterVector(std::move(v))};
                break;
            }
            case 1: {
                ClientUpdate u;
                u.client_id = static_cast<int>(rng.next_below(100));
                u.round = static_cast<int>(rng.next_below(10000));
                u.n_samples = static_cast<std::int64_t>(rng.next_below(1u << 20));
                const int dim = static_cast<int>(rng.next_below(30));
                std::vector<double> v(static_cast<std::size_t>(dim));
                for (double& x : v) x = rng.next_gaussian();
                u.delta = ParameterVector(std::move(v));
                msg = std::move(u);
                break;
            }
            case 2:
                msg = Hello{static_cast<std::uint32_t>(rng.next_below(1u << 16))};
                break;
            default:
                break;
        }
        roundtrip_ok = wire_messages_equal(decode_frame(encode_frame(msg)), msg);
    }

    record(7, "socket and in-process transports produce bitwise identical theta sequences",
           transport_ok && roundtrip_ok,
           std::string("5-round K=5 loopback run ") + (transport_ok ? "matched" : "DIVERGED") +
               "; 10^4 wire frames round-tripped " + (roundtrip_ok ? "bitwise" : "with mismatch"),
           timer.seconds());
}

// --- criterion 8: synthetic recommender trend (MovieLens analogue)

void criterion_recommender_trend() {
    Timer timer;
    ExperimentConfig cfg;
    cfg.scenario = Scenario::recommender;
    cfg.k = 10;
    cfg.t = 5;
    cfg.strategy = AggregationStrategy::parse("fedavg_weighted");
    cfg.seeds = {0, 42, 101, 123, 4242};
    cfg.local.learner_kind = LearnerKind::q_learning;
    cfg.local.tau = 2;
    cfg.local.batch_size = 10;
    cfg.local.eta = 0.1;
    cfg.local.q_alpha = 0.02;
    cfg.local.q_epsilon = 0.3;
    cfg.local.lambda = 1.0;
    cfg.recommender.accuracy_gain_points = 8.0;
    cfg.recommender.min_passing_seeds = 4;

    const ScenarioOutcome outcome = run_scenario(cfg);
    std::string detail = "accuracy +8pp and rising median Spearman";
    for (const auto& a : outcome.assertions) {
        if (a.name == "recommender_trend") detail += " (" + a.detail + ")";
    }
    const double elapsed = timer.seconds();
    record(8, "recommender trend: weighted accuracy and Spearman rise over 5 rounds",
           outcome.all_passed && elapsed < 180.0, detail, elapsed);
}

// --- criterion 9: sample-complexity identities

void criterion_sample_complexity_identities() {
    Timer timer;
    RngStream rng(9009, 0);
    bool identities_ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        BoundConstants c;
        c.mu = 0.05 + rng.next_double();
        c.l = c.mu * (1.0 + 4.0 * rng.next_double());
        c.g = 3.0 * rng.next_double();
        c.sigma2 = 2.0 * rng.next_double();
        c.j_star = rng.next_double();
        c.j0 = c.j_star - rng.next_double() - 0.01;
        c.eta = 1.0;
        const double eps = 0.01 + 2.0 * rng.next_double();
        const SampleComplexity sc = sample_complexity(c, eps);
        const double g2s = c.g * c.g + c.sigma2;
        const double r1 = std::abs(sc.k_min * (2.0 * c.mu * eps / 3.0) - g2s) / std::max(1.0, g2s);
        const double r2 = std::abs(sc.lambda_hmax_cap * (3.0 * c.l / c.mu) - eps) / eps;
        const double r3 =
            std::abs(sc.n_total - sc.k_min * sc.t_min) / std::max(1.0, std::abs(sc.n_total));
        worst = std::max({worst, r1, r2, r3});
        if (r1 > 1e-12 || r2 > 1e-12 || r3 > 1e-12) identities_ok = false;
    }

    // exact quartering on dyadic-friendly inputs
    BoundConstants c;
    c.l = 1.0;
    c.mu = 1.0;
    c.g = 1.0;
    c.sigma2 = 1.0;
    c.j_star = 1.0;
    c.j0 = 0.0;
    c.eta = 1.0;
    const bool quartering_ok = sample_complexity(c, 0.5).n_total ==
                                   4.0 * sample_complexity(c, 1.0).n_total &&
                               sample_complexity(c, 1.0).n_total == 9.0;

    record(9, "sample-complexity identities: N = K_min T_min, budget splits, N(eps/2) = 4 N(eps)",
           identities_ok && quartering_ok,
           "1000-point grid, worst relative deviation " + std::to_string(worst) +
               (quartering_ok ? "; quartering exact" : "; quartering FAILED"),
           timer.seconds());
}

}  // namespace

int main() {
    criteria_theorem1_and_lemma1();
    criterion_centralized_equivalence();
    criterion_tradeoff_inequality();
    criterion_lambda_sweep_rates();
    criterion_gradient_correctness();
    criterion_transport_equivalence();
    criterion_recommender_trend();
    criterion_sample_complexity_identities();

    std::sort(g_results.begin(), g_results.end(),
              [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
    bool all_passed = true;
    for (const auto& r : g_results) {
        std::printf("[%s] criterion %d: %s — %s (%.2fs)\n", r.passed ? "PASS" : "FAIL", r.id,
                    r.name.c_str(), r.detail.c_str(), r.seconds);
        all_passed = all_passed && r.passed;
    }
    std::printf("%s\n", all_passed ? "ACCEPTANCE: all criteria passed"
                                   : "ACCEPTANCE: criteria failures present");
    return all_passed ? 0 : 1;
}
