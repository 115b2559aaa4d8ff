#include <benchmark/benchmark.h>

#include <random>

#include "lmtp/decode.hpp"
#include "lmtp/spectree.hpp"

namespace {

lmtp::ModelF model() {
  lmtp::ModelConfig c;
  c.d_model = 64;
  c.n_layers = 2;
  c.max_positions = 128;
  return lmtp::ModelF::random(c, 5);
}

std::vector<int> prompt() {
  std::mt19937_64 rng(5);
  std::vector<int> p{lmtp::ByteTokenizer::kBos};
  for (int i = 0; i < 15; ++i) p.push_back(static_cast<int>(rng() % 256));
  return p;
}

// Untrained heads accept little, so this mostly measures per-round overhead.
void BM_Decode(benchmark::State& state) {
  const auto m = model();
  const auto p = prompt();
  lmtp::HeadAccuracyProfile profile;
  for (int i = 0; i < 7; ++i) profile.acc.push_back({0.9 - 0.1 * i, 0.05, 0.02});
  const auto tree = lmtp::build_tree(lmtp::decoding_profile(profile), 25, 3, 7);
  const auto strategy = static_cast<lmtp::Strategy>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lmtp::decode_loop(m, p, {.strategy = strategy, .max_new = 64, .tree = &tree}));
  state.SetLabel(lmtp::to_string(strategy));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Decode)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

void BM_LeapDraft(benchmark::State& state) {
  const auto m = model();
  const auto s = lmtp::prefill(m, prompt(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(lmtp::draft_lmtp(m, s));
}
BENCHMARK(BM_LeapDraft);

void BM_BuildTree(benchmark::State& state) {
  lmtp::HeadAccuracyProfile profile;
  for (int i = 0; i < 7; ++i) profile.acc.push_back({0.9 - 0.1 * i, 0.05, 0.02});
  for (auto _ : state) benchmark::DoNotOptimize(lmtp::build_tree(profile, static_cast<int>(state.range(0)), 3, 7));
}
BENCHMARK(BM_BuildTree)->Arg(8)->Arg(25)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
