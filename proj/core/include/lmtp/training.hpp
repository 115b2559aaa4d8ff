#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lmtp/corpus.hpp"
#include "lmtp/model.hpp"

namespace lmtp {

// ---------------------------------------------------------------------------
// Label alignment

/// Supervision pairs of one head: logits at `positions[j]` (0-based) are
/// trained to predict `targets[j]` = labels[positions[j] + offset].
struct LeapAlignment {
  int head = 1;
  int offset = 1;
  std::vector<int> positions;
  std::vector<int> targets;

  int size() const { return static_cast<int>(positions.size()); }
};

/// Pairs every position t with the token `offset(head)` steps ahead. When
/// `segments` is non-empty, pairs whose two ends lie in different documents
/// are dropped. A sequence too short for the offset yields no pairs.
LeapAlignment align_leap_targets(std::span<const int> labels, int head, const LeapSchedule& schedule,
                                 std::span<const int> segments = {});

// ---------------------------------------------------------------------------
// Objectives (all reductions in 64-bit)

/// Mean negative log-softmax of each target. Throws on an empty pair set.
/// When `d_logits` is given it receives grad_scale * (softmax - onehot) at the
/// scored rows (other rows untouched).
template <typename T>
double cross_entropy(const Matrix<T>& logits, const LeapAlignment& pairs, Matrix<T>* d_logits = nullptr,
                     double grad_scale = 0.0);

/// Next-token loss of base-head logits (row t predicts labels[t+1]).
template <typename T>
double ntp_loss(const Matrix<T>& base_logits, std::span<const int> labels);

/// Which parameter groups receive gradients.
struct GradTargets {
  bool backbone = false;
  bool base_head = false;
  bool extra_heads = false;
};

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_head;       // mean CE per head (0 for unused heads)
  std::vector<int> pairs_per_head;
  std::vector<int> skipped_heads;     // weighted heads with no valid pair
};

/// Σ_h weight[h] · mean CE of head h at offset(h), means taken over all valid
/// pairs in the batch. Heads with zero weight are not evaluated. Gradients of
/// the total are accumulated into `grads` for the selected groups.
template <typename T>
LossBreakdown leap_objective(const Model<T>& model, std::span<const Window> batch, std::span<const double> head_weights,
                             const LeapSchedule& schedule, Weights<T>* grads, GradTargets targets);

/// Head warm-up objective: Σ_{i≥2} CE_i with backbone and base head frozen.
template <typename T>
LossBreakdown warmup_loss(const Model<T>& model, std::span<const Window> batch, const LeapSchedule& schedule,
                          Weights<T>* grads = nullptr);

/// Full tuning objective: CE_1 + β Σ_{i≥2} CE_i, gradients into everything.
template <typename T>
LossBreakdown full_loss(const Model<T>& model, std::span<const Window> batch, double beta, const LeapSchedule& schedule,
                        Weights<T>* grads = nullptr);

/// Mean next-token CE of the base head over the windows (no gradients).
double evaluate_ntp(const ModelF& model, std::span<const Window> windows);

// ---------------------------------------------------------------------------
// Optimizer and schedule

/// Linear warm-up over warmup_ratio of `total_steps`, then cosine decay to 0.
double cosine_lr(int step, int total_steps, double warmup_ratio, double base_lr);

/// Adam with decoupled weight decay. Decay applies to 2-D weight matrices only.
template <typename T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(const Weights<T>& shape, Options options);

  /// One update of every parameter whose group is enabled in `targets`.
  void step(Weights<T>& params, const Weights<T>& grads, double lr, GradTargets targets);

 private:
  Options options_;
  Weights<T> m_;
  Weights<T> v_;
  long step_ = 0;
};

bool group_enabled(ParamGroup group, GradTargets targets);

/// Global L2 norm of the enabled gradients.
template <typename T>
double grad_norm(const Weights<T>& grads, GradTargets targets);

// ---------------------------------------------------------------------------
// Training loop

enum class Stage { kPretrain, kWarmup, kFull };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct TrainingConfig {
  Stage stage = Stage::kWarmup;
  double beta = 0.2;
  double lr = 1e-3;
  int epochs = 1;
  double warmup_ratio = 0.1;
  int batch_size = 8;
  int max_steps = 0;  // 0 = no cap
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // 0 disables clipping
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-stage head weights and trainable groups.
std::vector<double> stage_head_weights(Stage stage, int n_heads, double beta);
GradTargets stage_targets(Stage stage);

struct LossRecord {
  int step = 0;
  Stage stage = Stage::kWarmup;
  double lr = 0.0;
  double loss = 0.0;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(int step, double loss);
  int step() const { return step_; }

 private:
  int step_;
};

struct TrainResult {
  std::vector<LossRecord> history;
  std::vector<int> skipped_heads;  // heads that had no pair in some batch
};

/// Runs `config.epochs` passes over `windows` (shuffled per epoch from the
/// seed). Deterministic for a fixed seed. The optimizer state is fresh for
/// every call.
TrainResult train(ModelF& model, std::span<const Window> windows, const TrainingConfig& config);

/// Writes `step,stage,lr,loss` rows.
void write_loss_csv(const std::vector<LossRecord>& history, const std::string& path);

// ---------------------------------------------------------------------------
// Self-distillation

/// Each prompt followed by the base head's greedy continuation of up to
/// `max_new` tokens (stopping after an end token or at max_positions).
/// Greedy decoding ignores `seed`; it is kept so sampled variants share the
/// signature.
Corpus self_distill(const ModelF& model, const Corpus& prompts, int max_new, std::uint64_t seed);

}  // namespace lmtp
