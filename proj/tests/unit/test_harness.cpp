#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "fedrlhf/errors.hpp"
#include "fedrlhf/experiment.hpp"
#include "fedrlhf/quadratic.hpp"

using namespace fedrlhf;

namespace {

std::string minimal_config_json() {
    return R"({
      "version": 1,
      "scenario": "centralized_equiv",
      "k": 1,
      "t": 20,
      "strategy": "fedavg_uniform",
      "transport": "inproc",
      "seeds": [7],
      "local": {"tau": 1, "eta": 0.05, "batch_size": 1},
      "quadratic": {"dim": 4, "noise_sd": 0.5, "clip_g": 5.0}
    })";
}

}  // namespace

TEST_CASE("config parses and validates") {
    const ExperimentConfig cfg = ExperimentConfig::from_json(minimal_config_json());
    CHECK(cfg.scenario == Scenario::centralized_equiv);
    CHECK(cfg.k == 1);
    CHECK(cfg.t == 20);
    CHECK(cfg.quadratic.dim == 4);
    CHECK(cfg.local.eta == 0.05);
}

TEST_CASE("config rejects unknown fields with a path") {
    const std::string bad = R"({
      "version": 1, "scenario": "recommender", "k": 2, "t": 1, "seeds": [1],
      "local": {"tau": 1, "eta": 0.1, "bogus_knob": 3}
    })";
    try {
        (void)ExperimentConfig::from_json(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field == "local.bogus_knob");
    }

    const std::string top = R"({"version": 1, "scenario": "recommender", "k": 1, "t": 1,
                                "seeds": [1], "mystery": true})";
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(top), ConfigError);
}

TEST_CASE("config requires mandatory fields and consistent lambdas") {
    CHECK_THROWS_AS((void)ExperimentConfig::from_json("{\"version\": 1}"), ConfigError);
    const std::string bad_lambdas = R"({
      "version": 1, "scenario": "recommender", "k": 3, "t": 1, "seeds": [1],
      "lambdas": [0.1, 0.2]
    })";
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(bad_lambdas), ConfigError);
    const std::string bad_equiv = R"({
      "version": 1, "scenario": "centralized_equiv", "k": 2, "t": 1, "seeds": [1]
    })";
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(bad_equiv), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json("[1,2]"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json("{nope"), ConfigError);
}

TEST_CASE("parallel_for covers the range and propagates failures") {
    std::atomic<int> count{0};
    std::vector<int> seen(100, 0);
    parallel_for(100, [&](std::size_t i) {
        seen[i] = 1;
        count.fetch_add(1);
    });
    CHECK(count.load() == 100);
    for (int s : seen) CHECK(s == 1);

    CHECK_THROWS_AS(parallel_for(10,
                                 [](std::size_t i) {
                                     if (i == 5) throw ArgumentError("boom");
                                 }),
                    ArgumentError);
}

TEST_CASE("atomic file writes land complete") {
    const std::string dir = "test_out_atomic";
    std::filesystem::remove_all(dir);
    write_file_atomic(dir + "/nested/file.txt", "hello\n");
    std::ifstream in(dir + "/nested/file.txt");
    std::string line;
    std::getline(in, line);
    CHECK(line == "hello");
    std::filesystem::remove_all(dir);
}

TEST_CASE("centralized equivalence scenario passes") {
    ExperimentConfig cfg = ExperimentConfig::from_json(minimal_config_json());
    cfg.output_dir.clear();
    const ScenarioOutcome outcome = run_scenario(cfg);
    CHECK(outcome.all_passed);
    REQUIRE(!outcome.assertions.empty());
    for (const auto& a : outcome.assertions) CHECK(a.passed);
}

TEST_CASE("centralized sgd matches a manual loop") {
    RngStream spec_rng(3, 0);
    const QuadraticObjectiveSpec spec = QuadraticObjectiveSpec::random(4, 1, 0.5, 2.0, spec_rng);
    QuadraticGradientSource source(spec, 0, 0.0, 0.0);
    LocalConfig cfg;
    cfg.tau = 1;
    cfg.eta = 0.1;
    const std::vector<ParameterVector> trace =
        centralized_sgd(ParameterVector(4), source, cfg, 10, RngStream(1, 2));

    ParameterVector theta(4);
    for (int t = 0; t < 10; ++t) {
        theta.axpy(0.1, spec.client_gradient(0, theta));
        CHECK(bitwise_equal(theta, trace[static_cast<std::size_t>(t)]));
    }
}

TEST_CASE("quadratic bounds scenario on a reduced grid") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::quadratic_bounds;
    cfg.k = 1;  // unused by this scenario (grid drives K)
    cfg.t = 25;
    cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7};
    cfg.local.tau = 5;
    cfg.local.eta = 0.1;  // overridden by the scenario to 1/(L tau)
    cfg.quadratic.dim = 8;
    cfg.quadratic.k_grid = {1, 3};
    cfg.quadratic.lambda_grid = {0.0, 0.05};
    cfg.quadratic.noise_sd = 1.0;
    cfg.quadratic.clip_g = 8.0;
    cfg.quadratic.drift_etas = {0.05, 0.2};
    cfg.quadratic.drift_taus = {1, 4};
    cfg.quadratic.drift_seeds = 200;
    const ScenarioOutcome outcome = run_scenario(cfg);
    for (const auto& a : outcome.assertions) {
        INFO(a.name, ": ", a.detail);
        CHECK(a.passed);
    }
}

TEST_CASE("feedback pull instance is a valid environment with bounded feedback") {
    RngStream rng(4, 0);
    const FeedbackPullInstance inst = make_feedback_pull_instance(4, 3, 5, 1.0, 0.8, rng);
    CHECK(inst.env.n_states() == 4);
    CHECK(inst.env.n_actions() == 3);
    CHECK(inst.client_feedback.size() == 5);
    for (const auto& table : inst.client_feedback) {
        for (double h : table) CHECK(std::abs(h) <= 1.0);
    }
    CHECK_THROWS_AS(make_feedback_pull_instance(1, 2, 3, 1.0, 0.8, rng), ArgumentError);
}

TEST_CASE("lambda sweep invariants on a small family") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::lambda_sweep;
    cfg.k = 4;
    cfg.t = 6;
    cfg.seeds = {1, 2};
    cfg.local.tau = 2;
    cfg.local.eta = 0.1;
    cfg.local.batch_size = 4;
    cfg.local.horizon = 16;
    cfg.sweep.states = 3;
    cfg.sweep.actions = 2;
    cfg.sweep.gamma = 0.7;
    cfg.sweep_lambdas = {0.0, 0.3, 0.9};

    const std::vector<double> grid{0.0, 0.3, 0.9};
    const std::vector<std::uint64_t> seeds{1, 2};
    const SweepResult result = lambda_sweep(cfg, grid, seeds);
    REQUIRE(result.points.size() == 3);

    // lambda = 0: every client reproduces the aggregate exactly
    CHECK(result.points[0].row.lambda == 0.0);
    CHECK(result.points[0].row.mean_personalization == 0.0);
    for (double p : result.points[0].per_seed_personalization) CHECK(p == 0.0);

    // personalization grows with lambda, and J_g is maximal at lambda = 0
    CHECK(result.points[1].row.mean_personalization > 0.0);
    CHECK(result.points[2].row.mean_personalization >
          result.points[1].row.mean_personalization);
    CHECK(result.points[0].row.global_performance >=
          result.points[1].row.global_performance - 1e-12);
    CHECK(result.points[0].row.global_performance >=
          result.points[2].row.global_performance - 1e-12);

    // grid unsuited for the rate regression (lambda = 0 present)
    CHECK_FALSE(result.regression_valid);
}

TEST_CASE("scenario outputs are byte reproducible") {
    ExperimentConfig cfg = ExperimentConfig::from_json(minimal_config_json());
    cfg.t = 10;
    cfg.output_dir = "test_out_repro_a";
    std::filesystem::remove_all(cfg.output_dir);
    const ScenarioOutcome first = run_scenario(cfg);

    cfg.output_dir = "test_out_repro_b";
    std::filesystem::remove_all(cfg.output_dir);
    const ScenarioOutcome second = run_scenario(cfg);

    CHECK(first.summary_json == second.summary_json);
    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    CHECK(slurp("test_out_repro_a/rounds_seed7.jsonl") ==
          slurp("test_out_repro_b/rounds_seed7.jsonl"));
    CHECK(slurp("test_out_repro_a/summary.json") == slurp("test_out_repro_b/summary.json"));
    CHECK(!slurp("test_out_repro_a/rounds_seed7.jsonl").empty());
    std::filesystem::remove_all("test_out_repro_a");
    std::filesystem::remove_all("test_out_repro_b");
}
