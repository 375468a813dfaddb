#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fedrlhf/errors.hpp"
#include "fedrlhf/experiment.hpp"

namespace fedrlhf {

Scenario parse_scenario(const std::string& name) {
    if (name == "quadratic_bounds") return Scenario::quadratic_bounds;
    if (name == "recommender") return Scenario::recommender;
    if (name == "lambda_sweep") return Scenario::lambda_sweep;
    if (name == "centralized_equiv") return Scenario::centralized_equiv;
    throw ConfigError("scenario", "unknown scenario '" + name + "'");
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::quadratic_bounds: return "quadratic_bounds";
        case Scenario::recommender: return "recommender";
        case Scenario::lambda_sweep: return "lambda_sweep";
        case Scenario::centralized_equiv: return "centralized_equiv";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    if (version != 1) throw ConfigError("version", "unsupported config version");
    if (k < 1) throw ConfigError("k", "must be >= 1");
    if (t < 1) throw ConfigError("t", "must be >= 1");
    if (seeds.empty()) throw ConfigError("seeds", "must be non-empty");
    if (!client_lambdas.empty() && client_lambdas.size() != static_cast<std::size_t>(k)) {
        throw ConfigError("lambdas", "per-client lambda list must have length k");
    }
    for (double l : client_lambdas) {
        if (l < 0.0) throw ConfigError("lambdas", "lambda_k must be >= 0");
    }
    try {
        local.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError("local", e.what());
    }
    if (scenario == Scenario::lambda_sweep) {
        if (sweep_lambdas.empty()) throw ConfigError("sweep_lambdas", "sweep needs a lambda grid");
        for (double l : sweep_lambdas) {
            if (l < 0.0) throw ConfigError("sweep_lambdas", "lambda must be >= 0");
        }
    }
    if (scenario == Scenario::centralized_equiv && (k != 1 || local.tau != 1)) {
        throw ConfigError("scenario", "centralized_equiv requires k = 1 and local.tau = 1");
    }
}

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& prefix,
                    const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown field");
        }
    }
}

template <typename T>
void fetch(const json& obj, const std::string& prefix, const char* key, T& out,
           bool required = false) {
    if (obj.contains(key)) {
        try {
            obj.at(key).get_to(out);
        } catch (const json::exception& e) {
            throw ConfigError(prefix.empty() ? key : prefix + "." + key, e.what());
        }
    } else if (required) {
        throw ConfigError(prefix.empty() ? key : prefix + "." + key, "missing required field");
    }
}

LocalConfig parse_local(const json& obj) {
    reject_unknown(obj, "local",
                   {"tau", "eta", "batch_size", "lambda", "learner", "horizon", "clip_norm",
                    "use_baseline", "use_adam", "q_alpha", "q_epsilon"});
    LocalConfig c;
    fetch(obj, "local", "tau", c.tau);
    fetch(obj, "local", "eta", c.eta);
    fetch(obj, "local", "batch_size", c.batch_size);
    fetch(obj, "local", "lambda", c.lambda);
    fetch(obj, "local", "horizon", c.horizon);
    fetch(obj, "local", "clip_norm", c.clip_norm);
    fetch(obj, "local", "use_baseline", c.use_baseline);
    fetch(obj, "local", "use_adam", c.use_adam);
    fetch(obj, "local", "q_alpha", c.q_alpha);
    fetch(obj, "local", "q_epsilon", c.q_epsilon);
    if (obj.contains("learner")) {
        const std::string name = obj.at("learner").get<std::string>();
        if (name == "policy_gradient") {
            c.learner_kind = LearnerKind::policy_gradient;
        } else if (name == "q_learning") {
            c.learner_kind = LearnerKind::q_learning;
        } else {
            throw ConfigError("local.learner", "unknown learner '" + name + "'");
        }
    }
    return c;
}

QuadraticScenarioParams parse_quadratic(const json& obj) {
    reject_unknown(obj, "quadratic",
                   {"dim", "eig_lo", "eig_hi", "family_seed", "noise_sd", "clip_g", "pull_h_max",
                    "k_grid", "lambda_grid", "drift_etas", "drift_taus", "drift_seeds"});
    QuadraticScenarioParams p;
    fetch(obj, "quadratic", "dim", p.dim);
    fetch(obj, "quadratic", "eig_lo", p.eig_lo);
    fetch(obj, "quadratic", "eig_hi", p.eig_hi);
    fetch(obj, "quadratic", "family_seed", p.family_seed);
    fetch(obj, "quadratic", "noise_sd", p.noise_sd);
    fetch(obj, "quadratic", "clip_g", p.clip_g);
    fetch(obj, "quadratic", "pull_h_max", p.pull_h_max);
    fetch(obj, "quadratic", "k_grid", p.k_grid);
    fetch(obj, "quadratic", "lambda_grid", p.lambda_grid);
    fetch(obj, "quadratic", "drift_etas", p.drift_etas);
    fetch(obj, "quadratic", "drift_taus", p.drift_taus);
    fetch(obj, "quadratic", "drift_seeds", p.drift_seeds);
    return p;
}

RecommenderScenarioParams parse_recommender(const json& obj) {
    reject_unknown(obj, "recommender",
                   {"users_per_client", "items", "latent_dim", "user_common_weight", "noise_sd",
                    "gamma",
                    "train_fraction", "feedback_noise_sd", "feedback_threshold", "h_max",
                    "direct_per_step", "pairs_per_batch", "reward_model_lr",
                    "accuracy_gain_points", "min_passing_seeds"});
    RecommenderScenarioParams p;
    fetch(obj, "recommender", "users_per_client", p.users_per_client);
    fetch(obj, "recommender", "items", p.items);
    fetch(obj, "recommender", "latent_dim", p.latent_dim);
    fetch(obj, "recommender", "user_common_weight", p.user_common_weight);
    fetch(obj, "recommender", "noise_sd", p.noise_sd);
    fetch(obj, "recommender", "gamma", p.gamma);
    fetch(obj, "recommender", "train_fraction", p.train_fraction);
    fetch(obj, "recommender", "feedback_noise_sd", p.feedback_noise_sd);
    fetch(obj, "recommender", "feedback_threshold", p.feedback_threshold);
    fetch(obj, "recommender", "h_max", p.h_max);
    fetch(obj, "recommender", "direct_per_step", p.direct_per_step);
    fetch(obj, "recommender", "pairs_per_batch", p.pairs_per_batch);
    fetch(obj, "recommender", "reward_model_lr", p.reward_model_lr);
    fetch(obj, "recommender", "accuracy_gain_points", p.accuracy_gain_points);
    fetch(obj, "recommender", "min_passing_seeds", p.min_passing_seeds);
    return p;
}

SweepScenarioParams parse_sweep(const json& obj) {
    reject_unknown(obj, "sweep",
                   {"states", "actions", "gamma", "h_max", "epsilon_fraction", "slope_lo",
                    "slope_hi", "jg_r2_min"});
    SweepScenarioParams p;
    fetch(obj, "sweep", "states", p.states);
    fetch(obj, "sweep", "actions", p.actions);
    fetch(obj, "sweep", "gamma", p.gamma);
    fetch(obj, "sweep", "h_max", p.h_max);
    fetch(obj, "sweep", "epsilon_fraction", p.epsilon_fraction);
    fetch(obj, "sweep", "slope_lo", p.slope_lo);
    fetch(obj, "sweep", "slope_hi", p.slope_hi);
    fetch(obj, "sweep", "jg_r2_min", p.jg_r2_min);
    return p;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
    reject_unknown(j, "",
                   {"version", "scenario", "k", "t", "strategy", "transport", "seeds",
                    "output_dir", "local", "lambdas", "sweep_lambdas", "quadratic", "recommender",
                    "sweep"});

    ExperimentConfig cfg;
    fetch(j, "", "version", cfg.version, true);
    std::string scenario;
    fetch(j, "", "scenario", scenario, true);
    cfg.scenario = parse_scenario(scenario);
    fetch(j, "", "k", cfg.k, true);
    fetch(j, "", "t", cfg.t, true);
    if (j.contains("strategy")) {
        try {
            cfg.strategy = AggregationStrategy::parse(j.at("strategy").get<std::string>());
        } catch (const ArgumentError& e) {
            throw ConfigError("strategy", e.what());
        }
    }
    if (j.contains("transport")) {
        const std::string t = j.at("transport").get<std::string>();
        if (t == "inproc") {
            cfg.transport = TransportKind::inproc;
        } else if (t == "socket") {
            cfg.transport = TransportKind::socket;
        } else {
            throw ConfigError("transport", "unknown transport '" + t + "'");
        }
    }
    fetch(j, "", "seeds", cfg.seeds, true);
    fetch(j, "", "output_dir", cfg.output_dir);
    if (j.contains("local")) cfg.local = parse_local(j.at("local"));
    fetch(j, "", "lambdas", cfg.client_lambdas);
    fetch(j, "", "sweep_lambdas", cfg.sweep_lambdas);
    if (j.contains("quadratic")) cfg.quadratic = parse_quadratic(j.at("quadratic"));
    if (j.contains("recommender")) cfg.recommender = parse_recommender(j.at("recommender"));
    if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep"));

    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

}  // namespace fedrlhf
