#include <benchmark/benchmark.h>

#include "lmtp/theory.hpp"

namespace {

void BM_ExpectedLengthLeap(benchmark::State& state) {
  const lmtp::theory::AttenuationParams p{0.1, static_cast<int>(state.range(0)), 2};
  for (auto _ : state) benchmark::DoNotOptimize(lmtp::theory::expected_length_leap(p));
}
BENCHMARK(BM_ExpectedLengthLeap)->Arg(4)->Arg(16)->Arg(64);

void BM_Crossover(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(lmtp::theory::crossover_gamma(static_cast<int>(state.range(0)), 2));
}
BENCHMARK(BM_Crossover)->Arg(2)->Arg(16);

void BM_MonteCarlo(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(lmtp::theory::monte_carlo_length({0.1, 8, 2}, state.range(0), 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonteCarlo)->Arg(10000)->Arg(1000000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
