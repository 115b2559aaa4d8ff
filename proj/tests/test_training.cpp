#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "lmtp/decode.hpp"
#include "lmtp/training.hpp"
#include "test_util.hpp"

namespace lmtp {
namespace {

using testing::scrambled_model;
using testing::tiny_config;

Window window_of(std::vector<int> tokens, std::vector<int> segment = {}) {
  if (segment.empty()) segment.assign(tokens.size(), 0);
  return {std::move(tokens), std::move(segment)};
}

// Independent log-softmax in long double.
long double neg_log_prob(std::span<const float> logits, int target) {
  long double mx = logits[0];
  for (float v : logits) mx = std::max<long double>(mx, v);
  long double z = 0;
  for (float v : logits) z += std::exp(static_cast<long double>(v) - mx);
  return -(static_cast<long double>(logits[target]) - mx - std::log(z));
}

TEST(AlignTest, LeapOffsetsPairPositionsWithTargets) {
  const std::vector<int> labels = {10, 11, 12, 13, 14, 15, 16, 17};
  const LeapSchedule s(4, 2);
  const auto h1 = align_leap_targets(labels, 1, s);
  EXPECT_EQ(h1.offset, 1);
  EXPECT_EQ(h1.positions, (std::vector<int>{0, 1, 2, 3, 4, 5, 6}));
  const auto h2 = align_leap_targets(labels, 2, s);
  EXPECT_EQ(h2.offset, 3);
  EXPECT_EQ(h2.positions, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(h2.targets, (std::vector<int>{13, 14, 15, 16, 17}));
  const auto h4 = align_leap_targets(labels, 4, s);
  EXPECT_EQ(h4.positions, (std::vector<int>{0}));
  EXPECT_EQ(h4.targets, (std::vector<int>{17}));
  EXPECT_EQ(align_leap_targets(std::vector<int>{1, 2, 3}, 3, s).size(), 0);
}

TEST(AlignTest, PairsNeverCrossDocuments) {
  const std::vector<int> labels = {1, 2, 3, 4, 5, 6};
  const std::vector<int> segments = {0, 0, 0, 1, 1, 1};
  const auto a = align_leap_targets(labels, 2, LeapSchedule(2, 1), segments);
  EXPECT_EQ(a.positions, (std::vector<int>{0, 3}));
  EXPECT_EQ(a.targets, (std::vector<int>{3, 6}));
  EXPECT_THROW(align_leap_targets(labels, 1, LeapSchedule(2, 1), std::vector<int>{0}), std::invalid_argument);
}

TEST(CrossEntropyTest, MatchesDirectLogSoftmax) {
  Matrix<float> logits(3, 5);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) logits(r, c) = 0.3f * r - 0.7f * c + 0.11f * r * c;
  LeapAlignment pairs;
  pairs.positions = {0, 2};
  pairs.targets = {4, 1};
  const double expected =
      static_cast<double>((neg_log_prob(logits.row_span(0), 4) + neg_log_prob(logits.row_span(2), 1)) / 2);
  EXPECT_NEAR(cross_entropy(logits, pairs), expected, 1e-6);
  EXPECT_THROW(cross_entropy(logits, LeapAlignment{}), std::invalid_argument);
  pairs.targets = {4, 9};
  EXPECT_THROW(cross_entropy(logits, pairs), std::out_of_range);
}

TEST(CrossEntropyTest, UniformLogitsGiveLogVocab) {
  Matrix<float> logits(2, 258);
  LeapAlignment pairs;
  pairs.positions = {0, 1};
  pairs.targets = {7, 200};
  EXPECT_NEAR(cross_entropy(logits, pairs), std::log(258.0), 1e-9);
  logits(0, 7) = 100.0f;
  logits(1, 200) = 100.0f;
  EXPECT_NEAR(cross_entropy(logits, pairs), 0.0, 1e-9);
}

TEST(ObjectiveTest, FreshHeadsScoreBaseLogitsAtLeapOffsets) {
  const ModelF model = ModelF::random(tiny_config(), 37);
  const Window w = window_of({256, 12, 99, 3, 3, 70, 21, 5, 18, 44, 9, 120, 257});
  const LeapSchedule schedule(4, 2);
  const auto loss = warmup_loss(model, std::span<const Window>(&w, 1), schedule);
  const KvCache<float> empty(model.config());
  const auto logits = model.logits(model.forward_causal(w.tokens, empty).hidden, 1);
  long double total = 0;
  for (int h = 2; h <= 4; ++h) {
    const int off = 2 * (h - 1) + 1;
    long double sum = 0;
    int count = 0;
    for (int t = 0; t + off < static_cast<int>(w.tokens.size()); ++t, ++count)
      sum += neg_log_prob(logits.row_span(t), w.tokens[t + off]);
    EXPECT_NEAR(loss.per_head[h - 1], static_cast<double>(sum / count), 1e-5) << "head " << h;
    total += sum / count;
  }
  EXPECT_NEAR(loss.total, static_cast<double>(total), 1e-5);
}

TEST(ObjectiveTest, SmallStepAlongGradientLowersLoss) {
  const ModelF model = scrambled_model(tiny_config(), 38);
  const auto windows = pack_windows(testing::toy_corpus(8), 32, 16);
  const std::span<const Window> batch(windows.data(), std::min<std::size_t>(windows.size(), 4));
  const LeapSchedule schedule(4, 2);
  Weights<float> grads = Weights<float>::zeros(model.config());
  const double before = full_loss(model, batch, 0.2, schedule, &grads).total;
  ModelF stepped = model;
  AdamW<float> opt(stepped.weights(), {});
  opt.step(stepped.weights(), grads, 1e-4, stage_targets(Stage::kFull));
  EXPECT_LT(full_loss(stepped, batch, 0.2, schedule).total, before);
}

TEST(ObjectiveTest, UpdatingOneHeadLeavesOthersAtBase) {
  ModelF model = ModelF::random(tiny_config(), 39);
  const auto windows = pack_windows(testing::toy_corpus(8), 32, 16);
  const std::span<const Window> batch(windows.data(), 2);
  Weights<float> grads = Weights<float>::zeros(model.config());
  const std::vector<double> only_head2 = {0, 1, 0, 0};
  leap_objective(model, batch, only_head2, LeapSchedule(4, 2), &grads, stage_targets(Stage::kWarmup));
  // No decay: decoupled weight decay would shrink the untouched heads too.
  AdamW<float> opt(model.weights(), {.weight_decay = 0.0});
  opt.step(model.weights(), grads, 1e-2, stage_targets(Stage::kWarmup));

  const KvCache<float> empty(model.config());
  const auto hidden = model.forward_causal(windows[0].tokens, empty).hidden;
  const auto base = model.logits(hidden, 1);
  EXPECT_FALSE(model.logits(hidden, 2) == base);
  EXPECT_EQ(model.logits(hidden, 3), base);
  EXPECT_EQ(model.logits(hidden, 4), base);
}

TEST(ObjectiveTest, StrideOneLossIsPlainMultiTokenLoss) {
  const ModelF model = scrambled_model(tiny_config(32, 2, 3, 1), 31);
  const Window w = window_of({256, 5, 9, 40, 41, 42, 100, 7, 8, 9, 257});
  const LeapSchedule schedule(3, 1);
  const auto loss = full_loss(model, std::span<const Window>(&w, 1), 0.5, schedule);

  const KvCache<float> empty(model.config());
  const auto hidden = model.forward_causal(w.tokens, empty).hidden;
  long double expected = 0;
  for (int h = 1; h <= 3; ++h) {
    const auto logits = model.logits(hidden, h);
    long double sum = 0;
    int count = 0;
    for (int t = 0; t + h < static_cast<int>(w.tokens.size()); ++t, ++count)
      sum += neg_log_prob(logits.row_span(t), w.tokens[t + h]);
    expected += (h == 1 ? 1.0L : 0.5L) * sum / count;
  }
  EXPECT_NEAR(loss.total, static_cast<double>(expected), 1e-5);
}

TEST(ObjectiveTest, ZeroBetaReducesToNextTokenLoss) {
  const ModelF model = scrambled_model(tiny_config(), 32);
  const Window w = window_of({256, 3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5});
  const auto full = full_loss(model, std::span<const Window>(&w, 1), 0.0, LeapSchedule(4, 2));
  const KvCache<float> empty(model.config());
  const auto logits = model.logits(model.forward_causal(w.tokens, empty).hidden, 1);
  EXPECT_NEAR(full.total, ntp_loss(logits, w.tokens), 1e-6);

  Weights<float> grads = Weights<float>::zeros(model.config());
  full_loss(model, std::span<const Window>(&w, 1), 0.0, LeapSchedule(4, 2), &grads);
  for (const auto& head : grads.extra_heads)
    for (float g : head.w.flat()) ASSERT_EQ(g, 0.0f);
}

TEST(ObjectiveTest, ShortSequencesSkipFarHeads) {
  const ModelF model = ModelF::random(tiny_config(), 33);
  const Window w = window_of({256, 1, 2, 3, 4});  // offsets 1,3,5,7: heads 3 and 4 have no pair
  const auto loss = full_loss(model, std::span<const Window>(&w, 1), 0.2, LeapSchedule(4, 2));
  EXPECT_EQ(loss.skipped_heads, (std::vector<int>{3, 4}));
  EXPECT_EQ(loss.pairs_per_head, (std::vector<int>{4, 2, 0, 0}));
  const Window tiny = window_of({256, 1});
  EXPECT_THROW(warmup_loss(model, std::span<const Window>(&tiny, 1), LeapSchedule(4, 2)), std::invalid_argument);
}

TEST(ObjectiveTest, StageWeightsAndTargets) {
  EXPECT_EQ(stage_head_weights(Stage::kPretrain, 3, 0.2), (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(stage_head_weights(Stage::kWarmup, 3, 0.2), (std::vector<double>{0, 1, 1}));
  EXPECT_EQ(stage_head_weights(Stage::kFull, 3, 0.2), (std::vector<double>{1, 0.2, 0.2}));
  EXPECT_TRUE(stage_targets(Stage::kFull).backbone && stage_targets(Stage::kFull).extra_heads);
  EXPECT_FALSE(stage_targets(Stage::kWarmup).backbone);
  EXPECT_EQ(parse_stage("full"), Stage::kFull);
  EXPECT_THROW(parse_stage("bogus"), std::invalid_argument);
}

TEST(ScheduleTest, CosineWithLinearWarmup) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.1, 1.0), 0.1);
  EXPECT_DOUBLE_EQ(cosine_lr(9, 100, 0.1, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(cosine_lr(10, 100, 0.1, 1.0), 1.0);
  EXPECT_NEAR(cosine_lr(55, 100, 0.1, 1.0), 0.5, 1e-12);
  EXPECT_NEAR(cosine_lr(100, 100, 0.1, 1.0), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(cosine_lr(3, 0, 0.1, 2.0), 2.0);
}

TEST(TrainTest, ValidatesConfig) {
  TrainingConfig c;
  c.beta = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lr = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

std::vector<Window> toy_windows() { return pack_windows(testing::toy_corpus(60), 32, 16); }

TEST(TrainTest, DeterministicForFixedSeedAndLossFalls) {
  const auto windows = toy_windows();
  TrainingConfig cfg;
  cfg.stage = Stage::kPretrain;
  cfg.lr = 3e-3;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 5;
  ModelF a = ModelF::random(tiny_config(), 34);
  ModelF b = a;
  const auto ra = train(a, windows, cfg);
  const auto rb = train(b, windows, cfg);
  EXPECT_EQ(a, b);
  ASSERT_EQ(ra.history.size(), rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) EXPECT_EQ(ra.history[i].loss, rb.history[i].loss);
  EXPECT_LT(ra.history.back().loss, ra.history.front().loss);

  cfg.seed = 6;
  ModelF c = ModelF::random(tiny_config(), 34);
  train(c, windows, cfg);
  EXPECT_FALSE(a == c);
}

TEST(TrainTest, MaxStepsCapsHistory) {
  TrainingConfig cfg;
  cfg.stage = Stage::kFull;
  cfg.max_steps = 3;
  cfg.batch_size = 2;
  ModelF model = ModelF::random(tiny_config(), 35);
  EXPECT_EQ(train(model, toy_windows(), cfg).history.size(), 3u);
  cfg.epochs = 0;
  const ModelF before = model;
  EXPECT_TRUE(train(model, toy_windows(), cfg).history.empty());
  EXPECT_EQ(model, before);
}

TEST(TrainTest, NonFiniteLossAbortsWithStep) {
  ModelF model = ModelF::random(tiny_config(), 36);
  model.weights().unembed(0, 3) = std::numeric_limits<float>::infinity();
  TrainingConfig cfg;
  cfg.stage = Stage::kPretrain;
  try {
    train(model, toy_windows(), cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDivergedError& e) {
    EXPECT_EQ(e.step(), 0);
  }
}

TEST(TrainTest, LossCsvHasOneRowPerStep) {
  const auto dir = testing::temp_dir("loss_csv");
  std::vector<LossRecord> history = {{0, Stage::kWarmup, 1e-3, 2.5}, {1, Stage::kWarmup, 9e-4, 2.25}};
  write_loss_csv(history, (dir / "loss.csv").string());
  std::ifstream in(dir / "loss.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,stage,lr,loss");
  EXPECT_EQ(row, "0,warmup,0.001,2.5");
}

TEST(DistillTest, ContinuationIsBaseGreedyDecoding) {
  const ModelF model = scrambled_model(tiny_config(), 37);
  Corpus prompts;
  prompts.documents = {{256, 10, 20, 30}, {256, 99}};
  const Corpus out = self_distill(model, prompts, 12, 0);
  ASSERT_EQ(out.documents.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& p = prompts.documents[i];
    const auto& d = out.documents[i];
    ASSERT_TRUE(std::equal(p.begin(), p.end(), d.begin()));
    const auto greedy = ar_decode(model, p, 12, ByteTokenizer::kEos).tokens;
    EXPECT_EQ(std::vector<int>(d.begin() + static_cast<long>(p.size()), d.end()), greedy);
  }
  EXPECT_EQ(self_distill(model, prompts, 0, 0).documents, prompts.documents);
  EXPECT_THROW(self_distill(model, prompts, -1, 0), std::invalid_argument);
}

TEST(EvaluateTest, NtpMatchesDirectComputation) {
  const ModelF model = ModelF::random(tiny_config(), 38);
  const std::vector<Window> windows = {window_of({256, 1, 2, 3}), window_of({256, 4, 5})};
  const KvCache<float> empty(model.config());
  long double sum = 0;
  int count = 0;
  for (const auto& w : windows) {
    const auto logits = model.logits(model.forward_causal(w.tokens, empty).hidden, 1);
    for (std::size_t t = 0; t + 1 < w.tokens.size(); ++t, ++count)
      sum += neg_log_prob(logits.row_span(static_cast<int>(t)), w.tokens[t + 1]);
  }
  EXPECT_NEAR(evaluate_ntp(model, windows), static_cast<double>(sum / count), 1e-5);
}

}  // namespace
}  // namespace lmtp
