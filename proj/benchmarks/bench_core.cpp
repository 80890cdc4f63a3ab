#include <benchmark/benchmark.h>

#include <vector>

#include "grader/discovery.hpp"
#include "grader/dynamics.hpp"
#include "grader/planner.hpp"
#include "grader/stats.hpp"
#include "grader/trainer.hpp"

using namespace grader;

namespace {

EnvConfig env_config(EnvKind e) {
  EnvConfig c;
  c.env = e;
  return c;
}

// One batched model step over a planning population.
void BM_PredictBatch(benchmark::State& state) {
  const auto kind = static_cast<EnvKind>(state.range(0));
  const int K = static_cast<int>(state.range(1));
  const auto env = make_environment(env_config(kind));
  const auto& sp = env->spaces();
  DynamicsConfig dc;
  dc.hidden_size = default_trainer_config(kind).dynamics.hidden_size;
  FactoredDynamicsModel model(sp, reference_graph(kind), dc);
  Rng rng(1);
  const auto seqs = sample_sequences(sp.action, K, 1, rng);
  Eigen::MatrixXd S(sp.state.width(), K), next;
  const auto s0 = env->reset(2).state;
  for (int k = 0; k < K; ++k)
    for (int d = 0; d < sp.state.width(); ++d) S(d, k) = s0.values[d];
  for (auto _ : state) {
    model.predict_batch(S, seqs.steps[0], next, {});
    benchmark::DoNotOptimize(next.data());
  }
  state.SetItemsProcessed(state.iterations() * K);
}
BENCHMARK(BM_PredictBatch)
    ->Args({static_cast<int>(EnvKind::stack), 500})
    ->Args({static_cast<int>(EnvKind::unlock), 100})
    ->Args({static_cast<int>(EnvKind::crash), 1000})
    ->Unit(benchmark::kMicrosecond);

// A full planning call with the default population and horizon.
void BM_Plan(benchmark::State& state) {
  const auto kind = static_cast<EnvKind>(state.range(0));
  const auto env = make_environment(env_config(kind));
  FactoredDynamicsModel dyn(env->spaces(), reference_graph(kind),
                            DynamicsConfig{default_trainer_config(kind).dynamics.hidden_size, 0.1, {}, 3});
  LearnedRolloutModel model(dyn);
  const auto r = env->reset(4);
  const auto cfg = default_planner_config(kind);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(plan(model, r.state, r.goal, cfg, seed++).best_value);
}
BENCHMARK(BM_Plan)
    ->Arg(static_cast<int>(EnvKind::stack))
    ->Arg(static_cast<int>(EnvKind::unlock))
    ->Unit(benchmark::kMillisecond);

void BM_ChiSquareStratified(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(5);
  std::vector<std::int64_t> x(n), y(n), z(n);
  for (int k = 0; k < n; ++k) {
    x[k] = uniform_int(rng, 0, 3);
    y[k] = uniform_int(rng, 0, 3);
    z[k] = uniform_int(rng, 0, 15);
  }
  for (auto _ : state) benchmark::DoNotOptimize(stats::chi_square_independence(x, y, z).p_value);
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ChiSquareStratified)->Arg(1000)->Arg(10000);

// Discovery over every edge of a random-policy buffer.
void BM_Discover(benchmark::State& state) {
  const auto kind = static_cast<EnvKind>(state.range(0));
  const ReplayBuffer buf = collect_random(env_config(kind), 100, 6);
  const DiscoveryConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(discover(buf, cfg).edge_count());
}
BENCHMARK(BM_Discover)
    ->Arg(static_cast<int>(EnvKind::stack))
    ->Arg(static_cast<int>(EnvKind::unlock))
    ->Arg(static_cast<int>(EnvKind::crash))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
