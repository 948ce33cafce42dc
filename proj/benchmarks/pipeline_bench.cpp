#include <benchmark/benchmark.h>

#include "moeplan/pipeline.hpp"

using namespace moeplan;

namespace {

void BM_Simulate(benchmark::State& state) {
  const StageTimes t{2.0e-4, 2.1e-4, 1.5e-4};
  const int m = static_cast<int>(state.range(0));
  const int layers = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(simulate(t, m, layers));
  state.SetItemsProcessed(state.iterations() * 4 * m * layers);
}
BENCHMARK(BM_Simulate)->Args({3, 32})->Args({4, 56})->Args({8, 64});

void BM_SimulateWithJitter(benchmark::State& state) {
  const StageTimes t{2.0e-4, 2.1e-4, 1.5e-4};
  for (auto _ : state) benchmark::DoNotOptimize(simulate_with_jitter(t, 3, 32, CommBackend::nccl(), 1, 64));
}
BENCHMARK(BM_SimulateWithJitter)->Unit(benchmark::kMillisecond);

}  // namespace
