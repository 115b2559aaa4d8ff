#include <benchmark/benchmark.h>

#include <numeric>

#include "lmtp/training.hpp"

namespace {

lmtp::ModelConfig config(int d_model) {
  lmtp::ModelConfig c;
  c.d_model = d_model;
  c.n_layers = 2;
  c.max_positions = 128;
  return c;
}

std::vector<int> tokens(int n) {
  std::vector<int> t(n);
  std::iota(t.begin(), t.end(), 0);
  return t;
}

void BM_ForwardCausal(benchmark::State& state) {
  const auto model = lmtp::ModelF::random(config(static_cast<int>(state.range(0))), 1);
  const auto seq = tokens(static_cast<int>(state.range(1)));
  const lmtp::KvCache<float> empty(model.config());
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_causal(seq, empty));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_ForwardCausal)->ArgsProduct({{32, 64, 128}, {1, 8, 64}});

// One token against a filled cache: the cost of an autoregressive step.
void BM_IncrementalStep(benchmark::State& state) {
  const auto model = lmtp::ModelF::random(config(64), 2);
  lmtp::KvCache<float> cache(model.config());
  cache.commit_all(model.forward_causal(tokens(static_cast<int>(state.range(0))), cache).pending);
  const std::vector<int> next = {7};
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_causal(next, cache));
}
BENCHMARK(BM_IncrementalStep)->Arg(8)->Arg(64)->Arg(120);

void BM_FullLossWithGradients(benchmark::State& state) {
  const auto model = lmtp::ModelF::random(config(64), 3);
  std::vector<lmtp::Window> batch(8);
  for (auto& w : batch) {
    w.tokens = tokens(64);
    w.segment.assign(64, 0);
  }
  const lmtp::LeapSchedule schedule(4, 2);
  auto grads = lmtp::Weights<float>::zeros(model.config());
  for (auto _ : state) benchmark::DoNotOptimize(lmtp::full_loss(model, batch, 0.2, schedule, &grads));
}
BENCHMARK(BM_FullLossWithGradients)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
