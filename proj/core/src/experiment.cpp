#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "fedrlhf/errors.hpp"
#include "fedrlhf/experiment.hpp"
#include "fedrlhf/metrics.hpp"
#include "fedrlhf/quadratic.hpp"
#include "fedrlhf/recommender.hpp"
#include "fedrlhf/recommender_feedback.hpp"

namespace fedrlhf {

namespace {

using nlohmann::json;

// Stream-purpose tags so the rng trees of data generation, training and
// feedback never collide.
constexpr std::uint64_t kDataPurpose = 0xda7a0001;
constexpr std::uint64_t kClientPurpose = 0xc11e0001;
constexpr std::uint64_t kSharedClientPurpose = 0xc0117001;  // common random numbers
constexpr std::uint64_t kInstancePurpose = 0x1257a9ce;

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.parent_path() /
                         (target.filename().string() + ".tmp." +
                          std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArgumentError("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned max_workers) {
    if (n == 0) return;
    unsigned workers = max_workers != 0 ? max_workers : std::thread::hardware_concurrency();
    if (workers == 0) workers = 4;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> failures(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
}

std::vector<ParameterVector> centralized_sgd(const ParameterVector& init, GradientSource& source,
                                             const LocalConfig& cfg, int steps,
                                             RngStream rng_base) {
    cfg.validate();
    std::vector<ParameterVector> trace;
    trace.reserve(static_cast<std::size_t>(steps));
    ParameterVector theta = init;
    std::int64_t n_samples = 0;
    for (int t = 0; t < steps; ++t) {
        RngStream rng = rng_base.substream(static_cast<std::uint64_t>(t));
        const ParameterVector g = source.estimate(theta, rng, n_samples);
        theta.axpy(cfg.eta, g);
        theta.ensure_finite("centralized_sgd");
        trace.push_back(theta);
    }
    return trace;
}

FeedbackPullInstance make_feedback_pull_instance_impl(int n_states, int n_actions, int n_clients,
                                                    double h_max, double gamma, RngStream& rng) {
    if (n_states < 2 || n_actions < 2) {
        throw ArgumentError("feedback-pull family: need >= 2 states and actions");
    }
    if (n_clients < 1) throw ArgumentError("feedback-pull family: need >= 1 client");
    if (!(h_max > 0.0)) throw ArgumentError("feedback-pull family: h_max must be > 0");

    const std::size_t sa = static_cast<std::size_t>(n_states) * n_actions;
    std::vector<double> transition(sa * n_states);
    for (std::size_t row = 0; row < sa; ++row) {
        double sum = 0.0;
        for (int s2 = 0; s2 < n_states; ++s2) {
            const double u = 0.1 + rng.next_double();  // keep rows well mixed
            transition[row * n_states + s2] = u;
            sum += u;
        }
        for (int s2 = 0; s2 < n_states; ++s2) transition[row * n_states + s2] /= sum;
    }
    std::vector<double> reward(sa);
    for (double& r : reward) r = -1.0 + 2.0 * rng.next_double();
    std::vector<double> rho0(static_cast<std::size_t>(n_states),
                             1.0 / static_cast<double>(n_states));

    // H_k = h_max (bias + personal_k) / 2 with +-1 entries: the shared bias
    // survives aggregation (global displacement ~ lambda), the personal part
    // spreads the clients (personalization ~ lambda^2). The bias opposes the
    // intrinsic reward sign, so any lambda > 0 works against intrinsic
    // progress and the slowdown is monotone in lambda.
    std::vector<double> bias(sa);
    for (std::size_t i = 0; i < sa; ++i) bias[i] = reward[i] >= 0.0 ? -1.0 : 1.0;
    std::vector<std::vector<double>> client_feedback;
    client_feedback.reserve(static_cast<std::size_t>(n_clients));
    for (int k = 0; k < n_clients; ++k) {
        std::vector<double> h(sa);
        for (std::size_t i = 0; i < sa; ++i) {
            const double personal = rng.next_double() < 0.5 ? -1.0 : 1.0;
            h[i] = h_max * 0.5 * (bias[i] + personal);
        }
        client_feedback.push_back(std::move(h));
    }

    return FeedbackPullInstance{
        EnvironmentSpec(n_states, n_actions, std::move(transition), std::move(reward),
                        std::move(rho0), gamma, 1.0),
        std::move(client_feedback), h_max};
}

FeedbackPullInstance make_feedback_pull_instance(int n_states, int n_actions, int n_clients,
                                                 double h_max, double gamma, RngStream& rng) {
    return make_feedback_pull_instance_impl(n_states, n_actions, n_clients, h_max, gamma, rng);
}

// ---------------------------------------------------------------------------
// Scenario helpers
// ---------------------------------------------------------------------------

namespace {

struct ScenarioContext {
    const ExperimentConfig* cfg;
    std::vector<ScenarioAssertion> assertions;
    json summary;
    std::mutex mu;

    void assert_that(const std::string& name, bool passed, const std::string& detail) {
        std::lock_guard<std::mutex> lock(mu);
        assertions.push_back({name, passed, detail});
    }

    void write(const std::string& relative, const std::string& content) {
        if (cfg->output_dir.empty()) return;
        write_file_atomic(cfg->output_dir + "/" + relative, content);
    }

    void log_line(const std::string& line) {
        if (cfg->output_dir.empty()) return;
        std::lock_guard<std::mutex> lock(mu);
        namespace fs = std::filesystem;
        fs::create_directories(cfg->output_dir);
        std::ofstream log(cfg->output_dir + "/run.log", std::ios::app);
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        log << std::chrono::duration_cast<std::chrono::milliseconds>(now).count() << " " << line
            << "\n";
    }
};

std::string rounds_jsonl(const std::vector<RoundRecord>& rounds) {
    std::ostringstream out;
    for (const auto& r : rounds) out << round_record_json_line(r, /*include_duration=*/false) << "\n";
    return out.str();
}

double lambda_for_client(const ExperimentConfig& cfg, int client) {
    if (!cfg.client_lambdas.empty()) return cfg.client_lambdas[static_cast<std::size_t>(client)];
    return cfg.local.lambda;
}

// ----- centralized equivalence ---------------------------------------------

void run_centralized_equiv(ScenarioContext& ctx) {
    const ExperimentConfig& cfg = *ctx.cfg;
    const auto& qp = cfg.quadratic;
    RngStream family_rng(qp.family_seed, kInstancePurpose);
    const QuadraticObjectiveSpec spec =
        QuadraticObjectiveSpec::random(qp.dim, 1, qp.eig_lo, qp.eig_hi, family_rng);
    const ParameterVector theta0(static_cast<std::size_t>(qp.dim));

    json per_seed = json::array();
    for (std::uint64_t seed : cfg.seeds) {
        QuadraticGradientSource fed_source(spec, 0, qp.clip_g, qp.noise_sd);
        auto fed_source_ptr = std::shared_ptr<GradientSource>(&fed_source, [](GradientSource*) {});
        LocalLearnerHandle handle(0, fed_source_ptr, cfg.local,
                                  RngStream(seed, 0).substream(kClientPurpose + 0));
        ClientHandle* handles[] = {&handle};
        const FederationResult fed =
            run_federation(theta0, handles, cfg.t, cfg.strategy, /*parallel=*/false);

        QuadraticGradientSource ref_source(spec, 0, qp.clip_g, qp.noise_sd);
        const std::vector<ParameterVector> ref = centralized_sgd(
            theta0, ref_source, cfg.local, cfg.t, RngStream(seed, 0).substream(kClientPurpose + 0));

        bool equal = true;
        for (int t = 0; t < cfg.t && equal; ++t) {
            equal = bitwise_equal(fed.rounds[static_cast<std::size_t>(t)].theta_after,
                                  ref[static_cast<std::size_t>(t)]);
        }
        ctx.assert_that("centralized_equiv_seed" + std::to_string(seed), equal,
                        equal ? "trajectories bitwise identical over " + std::to_string(cfg.t) +
                                    " steps"
                              : "trajectory mismatch");
        per_seed.push_back({{"seed", seed}, {"bitwise_equal", equal}});
        ctx.write("rounds_seed" + std::to_string(seed) + ".jsonl", rounds_jsonl(fed.rounds));
    }
    std::lock_guard<std::mutex> lock(ctx.mu);
    ctx.summary["centralized_equiv"] = {{"steps", cfg.t}, {"seeds", per_seed}};
}

// ----- quadratic bound validation -------------------------------------------

void run_quadratic_bounds(ScenarioContext& ctx) {
    const ExperimentConfig& cfg = *ctx.cfg;
    const auto& qp = cfg.quadratic;
    const int k_max = *std::max_element(qp.k_grid.begin(), qp.k_grid.end());

    RngStream family_rng(qp.family_seed, kInstancePurpose);
    const QuadraticObjectiveSpec master =
        QuadraticObjectiveSpec::random(qp.dim, k_max, qp.eig_lo, qp.eig_hi, family_rng);

    // Client-specific pull targets around the optimum (only used when lambda > 0).
    std::vector<ParameterVector> targets;
    for (int k = 0; k < k_max; ++k) {
        ParameterVector t = master.optimum();
        for (std::size_t i = 0; i < t.dim(); ++i) t[i] += 2.0 * family_rng.next_gaussian();
        targets.push_back(std::move(t));
    }

    const ParameterVector theta0(static_cast<std::size_t>(qp.dim));
    json combos = json::array();

    for (int k_clients : qp.k_grid) {
        // Exact constants for the K-client subfamily.
        const QuadraticObjectiveSpec spec(
            qp.dim,
            std::vector<std::vector<double>>(master.a_matrices().begin(),
                                             master.a_matrices().begin() + k_clients),
            std::vector<std::vector<double>>(master.b_vectors().begin(),
                                             master.b_vectors().begin() + k_clients));
        LocalConfig local = cfg.local;
        local.eta = 1.0 / (spec.lipschitz() * local.tau);  // theorem learning rate

        for (double lambda : qp.lambda_grid) {
            BoundConstants consts;
            consts.l = spec.lipschitz();
            consts.mu = spec.mu();
            consts.g = qp.clip_g;
            consts.sigma2 = qp.noise_sd * qp.noise_sd;
            consts.m2 = consts.g * consts.g + consts.sigma2;
            consts.h_max = qp.pull_h_max;
            consts.lambda = lambda;
            consts.k = k_clients;
            consts.t = cfg.t;
            consts.tau = local.tau;
            consts.eta = local.eta;
            consts.j_star = spec.optimal_value();
            consts.j0 = spec.global_objective(theta0);

            // Mean-over-seeds optimality gap at theta_avg for every prefix T.
            std::vector<double> gap_sum(static_cast<std::size_t>(cfg.t), 0.0);
            std::mutex gap_mu;
            parallel_for(cfg.seeds.size(), [&](std::size_t si) {
                const std::uint64_t seed = cfg.seeds[si];
                std::vector<QuadraticGradientSource> sources;
                sources.reserve(static_cast<std::size_t>(k_clients));
                std::vector<std::unique_ptr<LocalLearnerHandle>> handles;
                std::vector<ClientHandle*> raw;
                for (int k = 0; k < k_clients; ++k) {
                    sources.emplace_back(spec, k, qp.clip_g, qp.noise_sd);
                    if (lambda > 0.0) {
                        sources.back().set_feedback_pull(lambda, qp.pull_h_max, targets[k]);
                    }
                }
                for (int k = 0; k < k_clients; ++k) {
                    auto src = std::shared_ptr<GradientSource>(&sources[static_cast<std::size_t>(k)],
                                                               [](GradientSource*) {});
                    handles.push_back(std::make_unique<LocalLearnerHandle>(
                        k, src, local, RngStream(seed, 0).substream(kClientPurpose + k)));
                    raw.push_back(handles.back().get());
                }
                const FederationResult run = run_federation(theta0, raw, cfg.t, cfg.strategy,
                                                            /*parallel=*/false);
                // theta_avg over prefixes: running sum of theta_t (before update).
                ParameterVector prefix_sum(theta0.dim());
                std::vector<double> gaps(static_cast<std::size_t>(cfg.t));
                for (int t = 0; t < cfg.t; ++t) {
                    prefix_sum += run.rounds[static_cast<std::size_t>(t)].theta_before;
                    ParameterVector avg = prefix_sum;
                    avg *= 1.0 / static_cast<double>(t + 1);
                    gaps[static_cast<std::size_t>(t)] =
                        spec.optimal_value() - spec.global_objective(avg);
                }
                std::lock_guard<std::mutex> lock(gap_mu);
                for (int t = 0; t < cfg.t; ++t) gap_sum[static_cast<std::size_t>(t)] += gaps[t];
            });

            int violations = 0;
            double worst_ratio = 0.0;
            std::vector<double> bound_curve(static_cast<std::size_t>(cfg.t));
            std::vector<double> measured_curve(static_cast<std::size_t>(cfg.t));
            for (int t = 1; t <= cfg.t; ++t) {
                BoundConstants c = consts;
                c.t = t;
                const double bound = convergence_bound(c);
                const double measured =
                    gap_sum[static_cast<std::size_t>(t - 1)] / static_cast<double>(cfg.seeds.size());
                bound_curve[static_cast<std::size_t>(t - 1)] = bound;
                measured_curve[static_cast<std::size_t>(t - 1)] = measured;
                if (measured > bound) ++violations;
                if (bound > 0.0) worst_ratio = std::max(worst_ratio, measured / bound);
            }
            const std::string name = "theorem1_K" + std::to_string(k_clients) + "_lambda" +
                                     std::to_string(lambda);
            ctx.assert_that(name, violations == 0,
                            "violations=" + std::to_string(violations) +
                                " worst_ratio=" + std::to_string(worst_ratio));
            combos.push_back({{"K", k_clients},
                              {"lambda", lambda},
                              {"L", consts.l},
                              {"mu", consts.mu},
                              {"eta", consts.eta},
                              {"violations", violations},
                              {"worst_ratio", worst_ratio},
                              {"bound", bound_curve},
                              {"measured", measured_curve}});
        }
    }

    // Lemma-1 drift grid on the same family (single client, no pull).
    json drift_cells = json::array();
    if (!qp.drift_etas.empty() && !qp.drift_taus.empty()) {
        const QuadraticObjectiveSpec spec(qp.dim, {master.a_matrices()[0]},
                                          {master.b_vectors()[0]});
        for (double eta : qp.drift_etas) {
            for (int tau : qp.drift_taus) {
                LocalConfig local = cfg.local;
                local.eta = eta;
                local.tau = tau;
                std::atomic<double> drift_sum{0.0};
                parallel_for(static_cast<std::size_t>(qp.drift_seeds), [&](std::size_t si) {
                    QuadraticGradientSource source(spec, 0, qp.clip_g, qp.noise_sd);
                    RngStream rng(static_cast<std::uint64_t>(si), 0xd21f7);
                    const ClientUpdate up = local_rlhf_epoch(theta0, source, local, rng);
                    double expected = drift_sum.load();
                    const double add = up.delta.squared_norm();
                    while (!drift_sum.compare_exchange_weak(expected, expected + add)) {
                    }
                });
                const double measured = drift_sum.load() / qp.drift_seeds;
                const double bound = eta * eta * static_cast<double>(tau) * tau *
                                     (qp.clip_g * qp.clip_g + qp.noise_sd * qp.noise_sd);
                const std::string name =
                    "lemma1_eta" + std::to_string(eta) + "_tau" + std::to_string(tau);
                ctx.assert_that(name, measured <= bound,
                                "measured=" + std::to_string(measured) +
                                    " bound=" + std::to_string(bound));
                drift_cells.push_back({{"eta", eta},
                                       {"tau", tau},
                                       {"measured", measured},
                                       {"bound", bound}});
            }
        }
    }

    std::lock_guard<std::mutex> lock(ctx.mu);
    ctx.summary["quadratic_bounds"] = {{"combos", combos}, {"lemma1_drift", drift_cells}};
}

// ----- recommender -----------------------------------------------------------

struct RecommenderRun {
    FederationResult result;
    std::vector<EvaluationReport> reports;  // one per round (inproc only)
};

RecommenderRun run_recommender_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                    bool socket_transport, bool evaluate) {
    const auto& rp = cfg.recommender;

    // Shared taste component: user latents mix a cross-client common draw
    // with a per-client personal draw, so aggregation has transferable signal
    // while clients keep their own preferences.
    const std::size_t latent_size =
        static_cast<std::size_t>(rp.users_per_client) * rp.latent_dim;
    // User coordinates sit around 1.0, the point where u . v + 3 crosses the
    // 4-star label boundary for unit items: bimodal offsets make decisive
    // likes/dislikes with a near-even label split, and sign disagreements
    // between the common and personal taste land near the boundary.
    auto taste_offset = [](RngStream& rng) {
        const double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
        return sign * (0.2 + 0.8 * rng.next_double());
    };
    RngStream common_rng = RngStream(seed, 0).substream(kDataPurpose);
    std::vector<double> common_users(latent_size);
    for (double& x : common_users) x = taste_offset(common_rng);

    std::vector<RecommenderEnv> envs;
    envs.reserve(static_cast<std::size_t>(cfg.k));
    const double w = rp.user_common_weight;
    for (int k = 0; k < cfg.k; ++k) {
        RngStream data_rng =
            RngStream(seed, 0).substream(kDataPurpose + 1 + static_cast<unsigned>(k));
        std::vector<double> users(latent_size);
        for (std::size_t i = 0; i < latent_size; ++i) {
            users[i] = 1.0 + w * common_users[i] + (1.0 - w) * taste_offset(data_rng);
        }
        std::vector<double> items(static_cast<std::size_t>(rp.items) * rp.latent_dim, 0.0);
        for (int i = 0; i < rp.items; ++i) {
            items[static_cast<std::size_t>(i) * rp.latent_dim + (i % rp.latent_dim)] =
                0.9 + 0.2 * data_rng.next_double();
        }
        envs.push_back(build_recommender_env(users, items, rp.users_per_client, rp.items,
                                             rp.latent_dim, rp.noise_sd, data_rng, rp.gamma,
                                             rp.train_fraction));
    }

    RecommenderFeedbackOracle::Options oracle_opts;
    oracle_opts.oracle.noise_sd = rp.feedback_noise_sd;
    oracle_opts.oracle.threshold = rp.feedback_threshold;
    oracle_opts.oracle.h_max = rp.h_max;
    oracle_opts.direct_per_step = rp.direct_per_step;
    oracle_opts.pairs_per_batch = rp.pairs_per_batch;
    oracle_opts.reward_model_lr = rp.reward_model_lr;

    std::vector<std::shared_ptr<RecommenderFeedbackOracle>> oracles;
    std::vector<std::unique_ptr<LocalLearnerHandle>> handles;
    std::vector<ClientHandle*> raw;
    for (int k = 0; k < cfg.k; ++k) {
        oracles.push_back(
            std::make_shared<RecommenderFeedbackOracle>(envs[static_cast<std::size_t>(k)],
                                                        oracle_opts));
        LocalConfig local = cfg.local;
        local.lambda = lambda_for_client(cfg, k);
        handles.push_back(std::make_unique<LocalLearnerHandle>(
            k, envs[static_cast<std::size_t>(k)].env, oracles.back(), local,
            RngStream(seed, 0).substream(kClientPurpose + static_cast<unsigned>(k))));
        raw.push_back(handles.back().get());
    }

    const ParameterVector theta0(envs[0].env.policy_dim());

    RecommenderRun out;
    auto evaluate_after_round = [&](const RoundRecord& record) {
        if (!evaluate) return;
        std::vector<RecommenderClientState> states;
        states.reserve(static_cast<std::size_t>(cfg.k));
        for (int k = 0; k < cfg.k; ++k) {
            RecommenderClientState cs;
            cs.client_id = k;
            cs.data = &envs[static_cast<std::size_t>(k)];
            cs.local_theta = &handles[static_cast<std::size_t>(k)]->last_local_theta();
            cs.global_theta = &record.theta_after;
            cs.lambda = lambda_for_client(cfg, k);
            cs.feedback = oracles[static_cast<std::size_t>(k)].get();
            states.push_back(cs);
        }
        out.reports.push_back(evaluate_round(record.round + 1, states));
    };

    if (!socket_transport) {
        out.result = run_federation(theta0, raw, cfg.t, cfg.strategy, /*parallel=*/true,
                                    evaluate_after_round);
        return out;
    }

    SocketServer server("127.0.0.1", 0, cfg.k);
    const std::uint16_t port = server.port();
    std::vector<std::thread> client_threads;
    std::vector<std::exception_ptr> client_errors(static_cast<std::size_t>(cfg.k));
    for (int k = 0; k < cfg.k; ++k) {
        client_threads.emplace_back([&, k] {
            try {
                run_socket_client("127.0.0.1", port, *raw[static_cast<std::size_t>(k)]);
            } catch (...) {
                client_errors[static_cast<std::size_t>(k)] = std::current_exception();
            }
        });
    }
    try {
        out.result = server.run(theta0, cfg.t, cfg.strategy);
    } catch (...) {
        for (auto& t : client_threads) t.join();
        throw;
    }
    for (auto& t : client_threads) t.join();
    for (auto& e : client_errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

double median_of(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void run_recommender(ScenarioContext& ctx) {
    const ExperimentConfig& cfg = *ctx.cfg;
    const auto& rp = cfg.recommender;
    json per_seed = json::array();
    int trend_passes = 0;

    std::vector<RecommenderRun> runs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), [&](std::size_t si) {
        runs[si] = run_recommender_seed(cfg, cfg.seeds[si], /*socket=*/false, /*evaluate=*/true);
    });

    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const std::uint64_t seed = cfg.seeds[si];
        const RecommenderRun& run = runs[si];

        const EvaluationReport& first = run.reports.front();
        const EvaluationReport& last = run.reports.back();
        const double acc_gain = last.global_weighted_accuracy - first.global_weighted_accuracy;

        auto spearmans = [](const EvaluationReport& r) {
            std::vector<double> xs;
            for (const auto& c : r.clients) {
                if (c.spearman) xs.push_back(*c.spearman);
            }
            return xs;
        };
        const double med_first = median_of(spearmans(first));
        const double med_last = median_of(spearmans(last));

        const bool acc_ok = acc_gain >= rp.accuracy_gain_points / 100.0;
        const bool spearman_ok = med_last > med_first;
        if (acc_ok && spearman_ok) ++trend_passes;

        per_seed.push_back({{"seed", seed},
                            {"accuracy_round1", first.global_weighted_accuracy},
                            {"accuracy_final", last.global_weighted_accuracy},
                            {"accuracy_gain", acc_gain},
                            {"spearman_median_round1", med_first},
                            {"spearman_median_final", med_last},
                            {"trend_pass", acc_ok && spearman_ok}});

        ctx.write("rounds_seed" + std::to_string(seed) + ".jsonl", rounds_jsonl(run.result.rounds));
        std::ostringstream evals;
        std::ostringstream csv;
        csv << EvaluationReport::csv_header();
        for (const auto& r : run.reports) {
            evals << r.to_json_line() << "\n";
            csv << r.to_csv_rows();
        }
        ctx.write("eval_seed" + std::to_string(seed) + ".jsonl", evals.str());
        ctx.write("metrics_seed" + std::to_string(seed) + ".csv", csv.str());
    }

    ctx.assert_that("recommender_trend",
                    trend_passes >= rp.min_passing_seeds,
                    std::to_string(trend_passes) + "/" + std::to_string(cfg.seeds.size()) +
                        " seeds passed (need >= " + std::to_string(rp.min_passing_seeds) + ")");

    if (cfg.transport == TransportKind::socket) {
        // Socket replay of the first seed must match the in-process run bitwise.
        const std::uint64_t seed = cfg.seeds.front();
        const RecommenderRun socket_run =
            run_recommender_seed(cfg, seed, /*socket=*/true, /*evaluate=*/false);
        bool equal = socket_run.result.rounds.size() == runs[0].result.rounds.size();
        for (std::size_t t = 0; equal && t < socket_run.result.rounds.size(); ++t) {
            equal = bitwise_equal(socket_run.result.rounds[t].theta_after,
                                  runs[0].result.rounds[t].theta_after);
        }
        ctx.assert_that("transport_equivalence", equal,
                        equal ? "socket and in-process theta sequences bitwise identical"
                              : "transport divergence detected");
    }

    std::lock_guard<std::mutex> lock(ctx.mu);
    ctx.summary["recommender"] = {{"seeds", per_seed}, {"trend_passes", trend_passes}};
}

// ----- lambda sweep ----------------------------------------------------------

struct SweepSeedMeasurement {
    double mean_personalization;
    double jg;
    double samples_to_eps;
};

SweepSeedMeasurement run_sweep_point(const ExperimentConfig& cfg, double lambda,
                                     std::uint64_t seed, double jg_target) {
    const auto& sp = cfg.sweep;
    RngStream inst_rng(seed, kInstancePurpose);
    const FeedbackPullInstance inst = make_feedback_pull_instance(
        sp.states, sp.actions, cfg.k, sp.h_max, sp.gamma, inst_rng);

    std::vector<std::shared_ptr<FeedbackSource>> feedback;
    std::vector<std::unique_ptr<LocalLearnerHandle>> handles;
    std::vector<ClientHandle*> raw;
    LocalConfig local = cfg.local;
    local.lambda = lambda;
    // Every client draws the same round streams: with lambda = 0 the clients
    // are then bit-identical and the only divergence left is the feedback.
    const RngStream shared_base = RngStream(seed, 0).substream(kSharedClientPurpose);
    for (int k = 0; k < cfg.k; ++k) {
        feedback.push_back(std::make_shared<TableFeedback>(
            sp.states, sp.actions, inst.client_feedback[static_cast<std::size_t>(k)], sp.h_max));
        handles.push_back(std::make_unique<LocalLearnerHandle>(k, inst.env, feedback.back(), local,
                                                               shared_base));
        raw.push_back(handles.back().get());
    }

    const ParameterVector theta0(inst.env.policy_dim());
    std::int64_t samples_total = 0;
    std::int64_t samples_to_target = -1;
    std::vector<double> jg_trace;
    auto on_round = [&](const RoundRecord& record) {
        for (const auto& u : record.updates) samples_total += u.n_samples;
        const double jg = exact_value(inst.env, record.theta_after);
        jg_trace.push_back(jg);
        if (samples_to_target < 0 && jg >= jg_target) samples_to_target = samples_total;
    };
    const FederationResult run =
        run_federation(theta0, raw, cfg.t, cfg.strategy, /*parallel=*/true, on_round);

    SweepSeedMeasurement m;
    m.jg = jg_trace.back();
    m.samples_to_eps =
        static_cast<double>(samples_to_target >= 0 ? samples_to_target : samples_total);
    double p_sum = 0.0;
    for (int k = 0; k < cfg.k; ++k) {
        PersonalizationInputs pi{&inst.env, &handles[static_cast<std::size_t>(k)]->last_local_theta(),
                                 &run.theta_final, StateDistributionKind::initial};
        const PersonalizationScore ps = personalization_score_exact(pi);
        p_sum += ps.value;
    }
    m.mean_personalization = p_sum / cfg.k;
    return m;
}

/// J_g targets per seed from a lambda = 0 reference run.
double sweep_target_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto& sp = cfg.sweep;
    RngStream inst_rng(seed, kInstancePurpose);
    const FeedbackPullInstance inst = make_feedback_pull_instance(
        sp.states, sp.actions, cfg.k, sp.h_max, sp.gamma, inst_rng);

    LocalConfig local = cfg.local;
    local.lambda = 0.0;
    const RngStream shared_base = RngStream(seed, 0).substream(kSharedClientPurpose);
    auto feedback = std::make_shared<ZeroFeedback>();
    std::vector<std::unique_ptr<LocalLearnerHandle>> handles;
    std::vector<ClientHandle*> raw;
    for (int k = 0; k < cfg.k; ++k) {
        handles.push_back(std::make_unique<LocalLearnerHandle>(k, inst.env, feedback, local,
                                                               shared_base));
        raw.push_back(handles.back().get());
    }
    const ParameterVector theta0(inst.env.policy_dim());
    const FederationResult run = run_federation(theta0, raw, cfg.t, cfg.strategy);
    const double j_init = exact_value(inst.env, theta0);
    const double j_final = exact_value(inst.env, run.theta_final);
    return j_init + sp.epsilon_fraction * (j_final - j_init);
}

}  // namespace

SweepResult lambda_sweep(const ExperimentConfig& base, std::span<const double> lambda_grid,
                         std::span<const std::uint64_t> seeds) {
    if (lambda_grid.empty()) throw ArgumentError("lambda_sweep: empty lambda grid");
    if (seeds.empty()) throw ArgumentError("lambda_sweep: empty seed list");
    std::vector<double> grid(lambda_grid.begin(), lambda_grid.end());
    std::sort(grid.begin(), grid.end());

    // Per-seed intrinsic targets from the lambda = 0 baseline.
    std::vector<double> targets(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t si) {
        targets[si] = sweep_target_for_seed(base, seeds[si]);
    });

    std::vector<SweepPoint> points(grid.size());
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        points[gi].row.lambda = grid[gi];
        points[gi].per_seed_personalization.resize(seeds.size());
        points[gi].per_seed_jg.resize(seeds.size());
        points[gi].per_seed_samples.resize(seeds.size());
    }

    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        for (std::size_t si = 0; si < seeds.size(); ++si) jobs.emplace_back(gi, si);
    }
    parallel_for(jobs.size(), [&](std::size_t ji) {
        const auto [gi, si] = jobs[ji];
        const SweepSeedMeasurement m =
            run_sweep_point(base, grid[gi], seeds[si], targets[si]);
        points[gi].per_seed_personalization[si] = m.mean_personalization;
        points[gi].per_seed_jg[si] = m.jg;
        points[gi].per_seed_samples[si] = m.samples_to_eps;
    });

    for (auto& p : points) {
        p.row.mean_personalization =
            mean_with_error(p.per_seed_personalization).mean;
        p.row.global_performance = mean_with_error(p.per_seed_jg).mean;
        p.row.samples_to_eps = mean_with_error(p.per_seed_samples).mean;
    }

    SweepResult result;
    result.points = std::move(points);
    std::vector<SweepRow> rows;
    for (const auto& p : result.points) rows.push_back(p.row);
    try {
        result.regression = rate_regression(rows);
        result.regression_valid = true;
    } catch (const ArgumentError&) {
        result.regression_valid = false;  // grid unsuited for rate fits (e.g. lambda = 0 rows)
    }
    return result;
}

namespace {

void run_lambda_sweep_scenario(ScenarioContext& ctx) {
    const ExperimentConfig& cfg = *ctx.cfg;
    const auto& sp = cfg.sweep;
    const SweepResult result = lambda_sweep(cfg, cfg.sweep_lambdas, cfg.seeds);

    if (!result.regression_valid) {
        ctx.assert_that("theorem4_rate_regression", false,
                        "lambda grid unsuited for rate regression");
        return;
    }
    const double pk_slope = result.regression.personalization_loglog.slope;
    ctx.assert_that("theorem4_personalization_slope",
                    pk_slope >= sp.slope_lo && pk_slope <= sp.slope_hi,
                    "log-log slope=" + std::to_string(pk_slope) + " window=[" +
                        std::to_string(sp.slope_lo) + "," + std::to_string(sp.slope_hi) + "]");
    const auto& jg_fit = result.regression.global_performance_linear;
    ctx.assert_that("theorem4_global_performance_linear",
                    jg_fit.slope < 0.0 && jg_fit.r_squared >= sp.jg_r2_min,
                    "slope=" + std::to_string(jg_fit.slope) +
                        " r2=" + std::to_string(jg_fit.r_squared));
    bool nondecreasing = true;
    for (std::size_t i = 1; i < result.points.size(); ++i) {
        if (result.points[i].row.samples_to_eps <
            result.points[i - 1].row.samples_to_eps - 1e-9) {
            nondecreasing = false;
        }
    }
    ctx.assert_that("theorem4_samples_nondecreasing", nondecreasing,
                    nondecreasing ? "samples-to-eps nondecreasing in lambda"
                                  : "samples-to-eps decreased between grid points");

    std::ostringstream csv;
    csv << "lambda,mean_p_k,j_g,samples_to_eps\n";
    json rows = json::array();
    for (const auto& p : result.points) {
        csv << p.row.lambda << ',' << p.row.mean_personalization << ',' << p.row.global_performance
            << ',' << p.row.samples_to_eps << "\n";
        rows.push_back({{"lambda", p.row.lambda},
                        {"mean_p_k", p.row.mean_personalization},
                        {"j_g", p.row.global_performance},
                        {"samples_to_eps", p.row.samples_to_eps},
                        {"per_seed_p_k", p.per_seed_personalization},
                        {"per_seed_j_g", p.per_seed_jg}});
    }
    ctx.write("sweep.csv", csv.str());

    std::lock_guard<std::mutex> lock(ctx.mu);
    ctx.summary["lambda_sweep"] = {
        {"rows", rows},
        {"pk_loglog_slope", pk_slope},
        {"pk_loglog_r2", result.regression.personalization_loglog.r_squared},
        {"jg_slope", jg_fit.slope},
        {"jg_r2", jg_fit.r_squared},
        {"samples_slope", result.regression.samples_linear.slope}};
}

}  // namespace

ScenarioOutcome run_scenario(const ExperimentConfig& cfg) {
    cfg.validate();
    ScenarioContext ctx;
    ctx.cfg = &cfg;
    ctx.summary["scenario"] = scenario_name(cfg.scenario);
    ctx.log_line("scenario " + scenario_name(cfg.scenario) + " started");

    switch (cfg.scenario) {
        case Scenario::centralized_equiv:
            run_centralized_equiv(ctx);
            break;
        case Scenario::quadratic_bounds:
            run_quadratic_bounds(ctx);
            break;
        case Scenario::recommender:
            run_recommender(ctx);
            break;
        case Scenario::lambda_sweep:
            run_lambda_sweep_scenario(ctx);
            break;
    }

    ScenarioOutcome outcome;
    outcome.assertions = ctx.assertions;
    json asserts = json::array();
    for (const auto& a : ctx.assertions) {
        outcome.all_passed = outcome.all_passed && a.passed;
        asserts.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
    }
    ctx.summary["assertions"] = asserts;
    ctx.summary["all_passed"] = outcome.all_passed;
    outcome.summary_json = ctx.summary.dump(2);
    ctx.write("summary.json", outcome.summary_json);
    ctx.log_line("scenario finished, all_passed=" + std::to_string(outcome.all_passed));
    return outcome;
}

}  // namespace fedrlhf
