#include <benchmark/benchmark.h>

#include "fedrlhf/distribution.hpp"
#include "fedrlhf/environment.hpp"
#include "fedrlhf/federation.hpp"
#include "fedrlhf/local_learner.hpp"
#include "fedrlhf/quadratic.hpp"
#include "fedrlhf/wire.hpp"

using namespace fedrlhf;

namespace {

EnvironmentSpec bench_env(int n, int m, double gamma) {
    RngStream rng(1, 0);
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

void BM_Softmax(benchmark::State& state) {
    RngStream rng(2, 0);
    std::vector<double> logits(static_cast<std::size_t>(state.range(0)));
    for (double& x : logits) x = 10.0 * rng.next_gaussian();
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax(logits));
    }
}
BENCHMARK(BM_Softmax)->Arg(4)->Arg(32)->Arg(256);

void BM_Rollout(benchmark::State& state) {
    const EnvironmentSpec env = bench_env(16, 4, 0.9);
    ParameterVector theta(env.policy_dim());
    RngStream rng(3, 0);
    const int horizon = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(rollout(env, theta, horizon, rng));
    }
    state.SetItemsProcessed(state.iterations() * horizon);
}
BENCHMARK(BM_Rollout)->Arg(64)->Arg(256);

void BM_ExactValue(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const EnvironmentSpec env = bench_env(n, 3, 0.9);
    ParameterVector theta(env.policy_dim());
    for (auto _ : state) {
        benchmark::DoNotOptimize(exact_value(env, theta));
    }
}
BENCHMARK(BM_ExactValue)->Arg(8)->Arg(32)->Arg(128);

void BM_PolicyGradient(benchmark::State& state) {
    const EnvironmentSpec env = bench_env(8, 3, 0.9);
    ParameterVector theta(env.policy_dim());
    ZeroFeedback feedback;
    LocalConfig cfg;
    cfg.batch_size = static_cast<int>(state.range(0));
    cfg.horizon = 64;
    RngStream rng(4, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(estimate_policy_gradient(theta, env, feedback, cfg, rng));
    }
    state.SetItemsProcessed(state.iterations() * cfg.batch_size * cfg.horizon);
}
BENCHMARK(BM_PolicyGradient)->Arg(1)->Arg(8);

void BM_Aggregate(benchmark::State& state) {
    RngStream rng(5, 0);
    const int k = static_cast<int>(state.range(0));
    const std::size_t dim = 1024;
    std::vector<ClientUpdate> updates(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        std::vector<double> d(dim);
        for (double& x : d) x = rng.next_gaussian();
        updates[static_cast<std::size_t>(i)].client_id = i;
        updates[static_cast<std::size_t>(i)].delta = ParameterVector(std::move(d));
        updates[static_cast<std::size_t>(i)].n_samples = i + 1;
    }
    const AggregationStrategy strategy{static_cast<AggregationKind>(state.range(1))};
    for (auto _ : state) {
        benchmark::DoNotOptimize(aggregate(updates, strategy));
    }
}
BENCHMARK(BM_Aggregate)
    ->Args({10, 0})
    ->Args({10, 1})
    ->Args({10, 2})
    ->Args({100, 0})
    ->Args({100, 2});

void BM_WireRoundTrip(benchmark::State& state) {
    RngStream rng(6, 0);
    std::vector<double> v(static_cast<std::size_t>(state.range(0)));
    for (double& x : v) x = rng.next_gaussian();
    const WireMessage msg = RoundBroadcast{7, ParameterVector(std::move(v))};
    for (auto _ : state) {
        benchmark::DoNotOptimize(decode_frame(encode_frame(msg)));
    }
    state.SetBytesProcessed(state.iterations() *
                            static_cast<std::int64_t>(encode_frame(msg).size()));
}
BENCHMARK(BM_WireRoundTrip)->Arg(64)->Arg(4096);

void BM_QuadraticGradient(benchmark::State& state) {
    RngStream rng(7, 0);
    const int dim = static_cast<int>(state.range(0));
    const QuadraticObjectiveSpec spec = QuadraticObjectiveSpec::random(dim, 4, 0.5, 2.0, rng);
    QuadraticGradientSource source(spec, 0, 6.0, 1.0);
    ParameterVector theta(static_cast<std::size_t>(dim));
    std::int64_t n = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(source.estimate(theta, rng, n));
    }
}
BENCHMARK(BM_QuadraticGradient)->Arg(20)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
