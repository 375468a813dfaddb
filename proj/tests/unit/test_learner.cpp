#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedrlhf/environment.hpp"
#include "fedrlhf/errors.hpp"
#include "fedrlhf/local_learner.hpp"
#include "fedrlhf/quadratic.hpp"
#include "fedrlhf/recommender.hpp"
#include "fedrlhf/recommender_feedback.hpp"

using namespace fedrlhf;

namespace {

EnvironmentSpec random_env(int n, int m, double gamma, RngStream& rng) {
    std::vector<double> transition(static_cast<std::size_t>(n) * m * n);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < m; ++a) {
            double sum = 0.0;
            double* row = transition.data() + (static_cast<std::size_t>(s) * m + a) * n;
            for (int s2 = 0; s2 < n; ++s2) {
                row[s2] = 0.05 + rng.next_double();
                sum += row[s2];
            }
            for (int s2 = 0; s2 < n; ++s2) row[s2] /= sum;
        }
    }
    std::vector<double> reward(static_cast<std::size_t>(n) * m);
    for (double& r : reward) r = -1.0 + 2.0 * rng.next_double();
    std::vector<double> rho0(static_cast<std::size_t>(n), 1.0 / n);
    return EnvironmentSpec(n, m, std::move(transition), std::move(reward), std::move(rho0), gamma);
}

class ZeroGradientSource final : public GradientSource {
public:
    explicit ZeroGradientSource(std::size_t dim) : dim_(dim) {}
    ParameterVector estimate(const ParameterVector&, RngStream&, std::int64_t& n) override {
        n += 1;
        return ParameterVector(dim_);
    }
    std::size_t dim() const override { return dim_; }

private:
    std::size_t dim_;
};

}  // namespace

TEST_CASE("policy gradient vanishes for a single-action environment") {
    RngStream env_rng(1, 0);
    const EnvironmentSpec env = random_env(4, 1, 0.9, env_rng);
    ParameterVector theta(env.policy_dim());
    for (std::size_t i = 0; i < theta.dim(); ++i) theta[i] = env_rng.next_double();
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.batch_size = 8;
    cfg.horizon = 30;
    RngStream rng(2, 0);
    const auto [grad, n] = estimate_policy_gradient(theta, env, feedback, cfg, rng);
    CHECK(n == 8 * 30);
    for (std::size_t i = 0; i < grad.dim(); ++i) CHECK(grad[i] == 0.0);
}

TEST_CASE("policy gradient is identically zero with zero rewards and lambda zero") {
    RngStream env_rng(3, 0);
    const EnvironmentSpec base = random_env(3, 2, 0.8, env_rng);
    const EnvironmentSpec env(3, 2, base.transition_table(),
                              std::vector<double>(base.policy_dim(), 0.0), base.rho0(), 0.8);
    ParameterVector theta(env.policy_dim());
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.batch_size = 4;
    cfg.horizon = 16;
    cfg.lambda = 0.0;
    RngStream rng(4, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto [grad, _] = estimate_policy_gradient(theta, env, feedback, cfg, rng);
        CHECK(grad.norm() == 0.0);
    }
}

TEST_CASE("policy gradient mean matches finite differences of the exact shaped value") {
    RngStream env_rng(5, 0);
    const EnvironmentSpec env = random_env(3, 2, 0.8, env_rng);
    ParameterVector theta(env.policy_dim());
    for (std::size_t i = 0; i < theta.dim(); ++i) theta[i] = 0.6 * (2.0 * env_rng.next_double() - 1.0);

    // a fixed bounded feedback table, shaping with lambda = 0.5
    std::vector<double> h_table(env.policy_dim());
    for (double& h : h_table) h = env_rng.next_double() < 0.5 ? -1.0 : 1.0;
    TableFeedback feedback(3, 2, h_table, 1.0);
    const double lambda = 0.5;

    LocalConfig cfg;
    cfg.batch_size = 1;
    cfg.horizon = 64;  // 0.8^64 ~ 6e-7: truncation invisible at this tolerance
    cfg.lambda = lambda;

    const int n_estimates = 20000;
    ParameterVector mean(theta.dim());
    RngStream rng(6, 0);
    for (int i = 0; i < n_estimates; ++i) {
        const auto [grad, _] = estimate_policy_gradient(theta, env, feedback, cfg, rng);
        mean += grad;
    }
    mean *= 1.0 / n_estimates;

    std::vector<double> shaped(env.policy_dim());
    for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 2; ++a) {
            shaped[static_cast<std::size_t>(s) * 2 + a] =
                env.reward(s, a) + lambda * feedback.h(s, a);
        }
    }
    const double h = 1e-5;
    for (std::size_t i = 0; i < theta.dim(); ++i) {
        ParameterVector plus = theta, minus = theta;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (exact_value_with_reward(env, plus, shaped) -
                           exact_value_with_reward(env, minus, shaped)) /
                          (2.0 * h);
        CHECK(mean[i] == doctest::Approx(fd).epsilon(0.05));
    }
}

TEST_CASE("local epoch closed-form step on the quadratic family") {
    RngStream rng(7, 0);
    const QuadraticObjectiveSpec spec = QuadraticObjectiveSpec::random(6, 1, 0.5, 2.0, rng);
    QuadraticGradientSource source(spec, 0);
    LocalConfig cfg;
    cfg.tau = 1;
    cfg.eta = 0.125;

    const ParameterVector theta0(6);
    RngStream step_rng(8, 0);
    const ClientUpdate up = local_rlhf_epoch(theta0, source, cfg, step_rng, 3, 11);
    CHECK(up.client_id == 3);
    CHECK(up.round == 11);
    CHECK(up.n_samples == 1);
    // from theta = 0 the delta is exactly eta * (b - A*0) = eta * b
    const ParameterVector expected_g = spec.client_gradient(0, theta0);
    for (int i = 0; i < 6; ++i) CHECK(up.delta[i] == cfg.eta * expected_g[i]);
}

TEST_CASE("local epoch with a zero gradient source does not move") {
    ZeroGradientSource source(5);
    LocalConfig cfg;
    cfg.tau = 1;
    cfg.eta = 0.3;
    RngStream rng(9, 0);
    const ClientUpdate up = local_rlhf_epoch(ParameterVector(5), source, cfg, rng);
    CHECK(up.delta.norm() == 0.0);

    LocalConfig bad;
    bad.tau = 0;
    CHECK_THROWS_AS(local_rlhf_epoch(ParameterVector(5), source, bad, rng), ArgumentError);
}

TEST_CASE("local epoch composes over tau when fed the same stream") {
    RngStream spec_rng(10, 0);
    const QuadraticObjectiveSpec spec = QuadraticObjectiveSpec::random(4, 1, 0.5, 2.0, spec_rng);
    QuadraticGradientSource source(spec, 0, /*clip=*/0.0, /*noise=*/0.7);

    LocalConfig three;
    three.tau = 3;
    three.eta = 0.05;
    LocalConfig one = three;
    one.tau = 1;

    const ParameterVector theta0(4);
    RngStream rng_a(11, 0);
    const ClientUpdate combined = local_rlhf_epoch(theta0, source, three, rng_a);

    RngStream rng_b(11, 0);
    ParameterVector theta = theta0;
    for (int i = 0; i < 3; ++i) {
        const ClientUpdate step = local_rlhf_epoch(theta, source, one, rng_b);
        theta += step.delta;
    }
    CHECK(rng_a.counter() == rng_b.counter());
    const ParameterVector via_combined = theta0 + combined.delta;
    for (int i = 0; i < 4; ++i) {
        CHECK(theta[i] == doctest::Approx(via_combined[i]).epsilon(1e-14));
    }
}

TEST_CASE("with lambda zero the trajectory is oracle independent") {
    RngStream data_rng(12, 0);
    const RecommenderEnv rec = make_recommender_env(2, 16, 2, 0.2, data_rng, 0.5, 0.75);

    LocalConfig cfg;
    cfg.tau = 3;
    cfg.batch_size = 4;
    cfg.horizon = 10;
    cfg.eta = 0.1;
    cfg.lambda = 0.0;

    auto zero = std::make_shared<ZeroFeedback>();
    RecommenderFeedbackOracle::Options opts;
    auto oracle = std::make_shared<RecommenderFeedbackOracle>(rec, opts);

    ParameterVector theta(rec.env.policy_dim());
    RngStream rng1(13, 0), rng2(13, 0);
    ReinforceGradientSource src1(rec.env, *zero, cfg);
    ReinforceGradientSource src2(rec.env, *oracle, cfg);
    const ClientUpdate a = local_rlhf_epoch(theta, src1, cfg, rng1);
    const ClientUpdate b = local_rlhf_epoch(theta, src2, cfg, rng2);
    CHECK(bitwise_equal(a.delta, b.delta));

    // same independence for the Q-learning path
    QTable q(rec.env.n_states(), rec.env.n_actions());
    RngStream rq1(14, 0), rq2(14, 0);
    const auto [qa, ua] = q_learning_epoch(q, rec.env, *zero, cfg, rq1);
    const auto [qb, ub] = q_learning_epoch(q, rec.env, *oracle, cfg, rq2);
    CHECK(bitwise_equal(ua.delta, ub.delta));
}

TEST_CASE("gradient clipping enforces the configured bound") {
    RngStream env_rng(15, 0);
    const EnvironmentSpec env = random_env(4, 3, 0.9, env_rng);
    ParameterVector theta(env.policy_dim());
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.batch_size = 2;
    cfg.horizon = 40;
    cfg.clip_norm = 0.5;
    RngStream rng(16, 0);
    for (int i = 0; i < 200; ++i) {
        const auto [grad, _] = estimate_policy_gradient(theta, env, feedback, cfg, rng);
        CHECK(grad.norm() <= 0.5 + 1e-12);
    }
}

TEST_CASE("local-global drift respects the eta^2 tau^2 bound") {
    RngStream spec_rng(17, 0);
    const QuadraticObjectiveSpec spec = QuadraticObjectiveSpec::random(8, 1, 0.5, 2.0, spec_rng);
    const double clip_g = 5.0;
    const double noise_sd = 1.0;
    const ParameterVector theta0(8);

    for (double eta : {0.05, 0.2}) {
        for (int tau : {1, 4}) {
            LocalConfig cfg;
            cfg.eta = eta;
            cfg.tau = tau;
            double drift = 0.0;
            const int n_seeds = 300;
            for (int seed = 0; seed < n_seeds; ++seed) {
                QuadraticGradientSource source(spec, 0, clip_g, noise_sd);
                RngStream rng(static_cast<std::uint64_t>(seed), 99);
                drift += local_rlhf_epoch(theta0, source, cfg, rng).delta.squared_norm();
            }
            drift /= n_seeds;
            const double bound = eta * eta * tau * tau * (clip_g * clip_g + noise_sd * noise_sd);
            CHECK(drift <= bound);
        }
    }
}

TEST_CASE("q-learning epoch matches the hand-rolled backup oracle") {
    // deterministic 2-state chain with a single action
    const EnvironmentSpec env(2, 1, {0.0, 1.0, 1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, 0.5);
    QTable q(2, 1);
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.tau = 1;
    cfg.batch_size = 4;
    cfg.q_alpha = 1.0;
    cfg.q_epsilon = 0.0;
    cfg.lambda = 0.0;
    RngStream rng(18, 0);
    const auto [q_after, up] = q_learning_epoch(q, env, feedback, cfg, rng);

    // oracle: start in state 0, visit 0,1,0,1 and apply full backups in order
    double q0 = 0.0, q1 = 0.0;
    q0 = 1.0 + 0.5 * q1;  // 1.0
    q1 = 0.0 + 0.5 * q0;  // 0.5
    q0 = 1.0 + 0.5 * q1;  // 1.25
    q1 = 0.0 + 0.5 * q0;  // 0.625
    CHECK(q_after.at(0, 0) == doctest::Approx(q0));
    CHECK(q_after.at(1, 0) == doctest::Approx(q1));
    CHECK(up.n_samples == 4);
}

TEST_CASE("q-learning keeps a zero table at zero rewards") {
    RngStream env_rng(19, 0);
    const EnvironmentSpec base = random_env(3, 2, 0.9, env_rng);
    const EnvironmentSpec env(3, 2, base.transition_table(),
                              std::vector<double>(base.policy_dim(), 0.0), base.rho0(), 0.9);
    QTable q(3, 2);
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.tau = 5;
    cfg.batch_size = 20;
    cfg.q_alpha = 0.5;
    cfg.q_epsilon = 0.3;
    RngStream rng(20, 0);
    const auto [q_after, up] = q_learning_epoch(q, env, feedback, cfg, rng);
    for (double v : q_after.q) CHECK(v == 0.0);
    CHECK(up.delta.norm() == 0.0);
}

TEST_CASE("q-learning converges to the value-iteration optimal policy") {
    RngStream env_rng(21, 0);
    const EnvironmentSpec env = random_env(4, 3, 0.9, env_rng);
    const std::vector<double> q_star = optimal_q_values(env);

    QTable q(4, 3);
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.tau = 10;
    cfg.batch_size = 50;
    cfg.q_epsilon = 0.4;
    RngStream rng(22, 0);
    for (int epoch = 0; epoch < 400; ++epoch) {
        cfg.q_alpha = 0.3 / (1.0 + 0.05 * epoch);  // annealed step size
        auto [q_next, _] = q_learning_epoch(q, env, feedback, cfg, rng);
        q = std::move(q_next);
    }
    for (int s = 0; s < 4; ++s) {
        int best_star = 0;
        for (int a = 1; a < 3; ++a) {
            if (q_star[static_cast<std::size_t>(s) * 3 + a] >
                q_star[static_cast<std::size_t>(s) * 3 + best_star]) {
                best_star = a;
            }
        }
        CHECK(q.greedy_action(s) == best_star);
    }
}

TEST_CASE("q-learning clips to the shaped value bound") {
    // big rewards force the clip: R = 1, gamma = 0.9 -> |q| <= 10 + slack
    const EnvironmentSpec env(1, 1, {1.0}, {1.0}, {1.0}, 0.9);
    QTable q(1, 1);
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.tau = 50;
    cfg.batch_size = 50;
    cfg.q_alpha = 1.0;
    cfg.q_epsilon = 0.0;
    RngStream rng(23, 0);
    auto [q_after, _] = q_learning_epoch(q, env, feedback, cfg, rng);
    CHECK(q_after.at(0, 0) <= 10.0 + 1e-6);
    CHECK(q_after.at(0, 0) > 9.0);
}

TEST_CASE("q table round trips through parameters") {
    QTable q(2, 3);
    q.at(1, 2) = 4.0;
    const ParameterVector p = q.as_parameters();
    const QTable back = QTable::from_parameters(p, 2, 3);
    CHECK(back.at(1, 2) == 4.0);
    CHECK_THROWS_AS(QTable::from_parameters(p, 3, 3), ArgumentError);
}
