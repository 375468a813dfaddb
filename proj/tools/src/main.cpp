#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/errors.hpp"
#include "fedrlhf/experiment.hpp"
#include "fedrlhf/federation.hpp"
#include "fedrlhf/theory.hpp"

namespace {

using namespace fedrlhf;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int print_outcome(const ScenarioOutcome& outcome) {
    for (const auto& a : outcome.assertions) {
        std::cout << (a.passed ? "[PASS] " : "[FAIL] ") << a.name << ": " << a.detail << "\n";
    }
    std::cout << (outcome.all_passed ? "all assertions passed" : "assertion failures present")
              << "\n";
    return outcome.all_passed ? 0 : 1;
}

int cmd_simulate(const std::string& config_path) {
    const ExperimentConfig cfg = ExperimentConfig::from_json_file(config_path);
    return print_outcome(run_scenario(cfg));
}

int cmd_bounds(const std::string& constants_path, double epsilon) {
    const BoundConstants c = BoundConstants::from_json(slurp(constants_path));
    const ConvergenceBound b = convergence_bound_terms(c);
    const SampleComplexity sc = sample_complexity(c, epsilon);
    nlohmann::json out;
    out["theorem1"] = {{"eps_t", b.eps_t},
                       {"eps_v", b.eps_v},
                       {"eps_h", b.eps_h},
                       {"total", b.total},
                       {"eta_matches_theory", b.eta_matches_theory},
                       {"contraction_rho", contraction_factor(c)}};
    out["theorem2"] = {{"epsilon", epsilon},
                       {"t_min", sc.t_min},
                       {"k_min", sc.k_min},
                       {"k_min_effective", sc.k_min_effective},
                       {"k_min_clamped", sc.k_min_clamped},
                       {"lambda_hmax_cap", sc.lambda_hmax_cap},
                       {"n_total", sc.n_total}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_serve(const std::string& listen, std::uint16_t port, int k, int t,
              const std::string& strategy, int dim, const std::string& rounds_out) {
    SocketServer server(listen, port, k);
    std::cerr << "listening on " << listen << ":" << server.port() << " for " << k
              << " clients, " << t << " rounds\n";
    const FederationResult result =
        server.run(ParameterVector(static_cast<std::size_t>(dim)),
                   t, AggregationStrategy::parse(strategy));
    std::ostringstream lines;
    for (const auto& r : result.rounds) {
        lines << round_record_json_line(r, /*include_duration=*/true) << "\n";
    }
    if (!rounds_out.empty()) {
        write_file_atomic(rounds_out, lines.str());
    } else {
        std::cout << lines.str();
    }
    std::cerr << "final theta norm " << result.theta_final.norm() << "\n";
    return 0;
}

int cmd_client(const std::string& connect, std::uint16_t port, int id,
               const std::string& env_path, const std::string& feedback_path, double h_max,
               const LocalConfig& local, std::uint64_t seed) {
    const EnvironmentSpec env = EnvironmentSpec::from_json(slurp(env_path));
    std::shared_ptr<FeedbackSource> feedback;
    if (feedback_path.empty()) {
        feedback = std::make_shared<ZeroFeedback>();
    } else {
        const nlohmann::json j = nlohmann::json::parse(slurp(feedback_path));
        std::vector<double> table;
        for (const auto& row : j) {
            for (const auto& v : row) table.push_back(v.get<double>());
        }
        feedback = std::make_shared<TableFeedback>(env.n_states(), env.n_actions(),
                                                   std::move(table), h_max);
    }
    LocalLearnerHandle handle(id, env, feedback, local,
                              RngStream(seed, 0).substream(static_cast<std::uint64_t>(id)));
    run_socket_client(connect, port, handle);
    std::cerr << "client " << id << " finished\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& lambdas_csv,
              const std::string& output_dir) {
    ExperimentConfig cfg = ExperimentConfig::from_json_file(config_path);
    cfg.scenario = Scenario::lambda_sweep;
    if (!lambdas_csv.empty()) {
        cfg.sweep_lambdas.clear();
        std::stringstream ss(lambdas_csv);
        std::string token;
        while (std::getline(ss, token, ',')) cfg.sweep_lambdas.push_back(std::stod(token));
    }
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    cfg.validate();
    return print_outcome(run_scenario(cfg));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedRLHF simulator: federated RLHF with shaped rewards, bound validation and "
                 "personalization sweeps"};
    app.require_subcommand(1);

    std::string config_path;
    auto* simulate = app.add_subcommand("simulate", "run a scenario from a JSON config");
    simulate->add_option("config", config_path, "experiment config JSON")->required();

    std::string constants_path;
    double epsilon = 0.1;
    auto* bounds = app.add_subcommand("bounds", "evaluate the convergence and sample bounds");
    bounds->add_option("constants", constants_path, "bound constants JSON")->required();
    bounds->add_option("--epsilon", epsilon, "target optimality gap for the sample bound");

    std::string listen = "127.0.0.1";
    std::uint16_t port = 0;
    int k = 1, t = 1, dim = 1;
    std::string strategy = "fedavg_uniform";
    std::string rounds_out;
    auto* serve = app.add_subcommand("serve", "run the federation server over sockets");
    serve->add_option("--listen", listen, "bind address");
    serve->add_option("--port", port, "port (0 = ephemeral)");
    serve->add_option("--k", k, "number of clients")->required();
    serve->add_option("--t", t, "communication rounds")->required();
    serve->add_option("--strategy", strategy, "fedavg_uniform|fedavg_weighted|coordinate_median");
    serve->add_option("--dim", dim, "parameter dimension (theta_0 = 0)")->required();
    serve->add_option("--rounds-out", rounds_out, "round records JSONL output path");

    std::string connect = "127.0.0.1";
    std::uint16_t cport = 0;
    int id = 0;
    std::string env_path, feedback_path;
    double h_max = 1.0;
    std::uint64_t seed = 0;
    LocalConfig local;
    std::string learner = "policy_gradient";
    auto* client = app.add_subcommand("client", "run one federation client over sockets");
    client->add_option("--connect", connect, "server address");
    client->add_option("--port", cport, "server port")->required();
    client->add_option("--id", id, "client id")->required();
    client->add_option("--env", env_path, "environment JSON path")->required();
    client->add_option("--feedback-table", feedback_path,
                       "optional JSON table of H(s,a) values");
    client->add_option("--h-max", h_max, "feedback bound for the table");
    client->add_option("--seed", seed, "rng seed");
    client->add_option("--tau", local.tau, "local update steps");
    client->add_option("--eta", local.eta, "learning rate");
    client->add_option("--batch", local.batch_size, "mini-batch size");
    client->add_option("--horizon", local.horizon, "rollout horizon");
    client->add_option("--lambda", local.lambda, "feedback weight lambda");
    client->add_option("--learner", learner, "policy_gradient|q_learning");
    client->add_option("--q-alpha", local.q_alpha, "Q-learning step size");
    client->add_option("--q-epsilon", local.q_epsilon, "exploration rate");

    std::string sweep_config, lambdas_csv, sweep_out;
    auto* sweep = app.add_subcommand("sweep", "run a lambda sweep on the feedback-pull family");
    sweep->add_option("--config", sweep_config, "base experiment config JSON")->required();
    sweep->add_option("--lambdas", lambdas_csv, "comma-separated lambda grid");
    sweep->add_option("--output", sweep_out, "output directory override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(config_path);
        if (bounds->parsed()) return cmd_bounds(constants_path, epsilon);
        if (serve->parsed()) return cmd_serve(listen, port, k, t, strategy, dim, rounds_out);
        if (client->parsed()) {
            if (learner == "q_learning") {
                local.learner_kind = LearnerKind::q_learning;
            } else if (learner != "policy_gradient") {
                throw ArgumentError("unknown learner: " + learner);
            }
            return cmd_client(connect, cport, id, env_path, feedback_path, h_max, local, seed);
        }
        if (sweep->parsed()) return cmd_sweep(sweep_config, lambdas_csv, sweep_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
