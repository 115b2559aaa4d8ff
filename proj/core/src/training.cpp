#include "lmtp/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>

namespace lmtp {

LeapAlignment align_leap_targets(std::span<const int> labels, int head, const LeapSchedule& schedule,
                                 std::span<const int> segments) {
  if (!segments.empty() && segments.size() != labels.size())
    throw std::invalid_argument("align_leap_targets: segments length mismatch");
  LeapAlignment out;
  out.head = head;
  out.offset = schedule.offset(head);
  const int n = static_cast<int>(labels.size());
  for (int t = 0; t + out.offset < n; ++t) {
    if (!segments.empty() && segments[t] != segments[t + out.offset]) continue;
    out.positions.push_back(t);
    out.targets.push_back(labels[t + out.offset]);
  }
  return out;
}

template <typename T>
double cross_entropy(const Matrix<T>& logits, const LeapAlignment& pairs, Matrix<T>* d_logits, double grad_scale) {
  if (pairs.size() == 0) throw std::invalid_argument("cross_entropy: empty pair set");
  const int vocab = logits.cols();
  double total = 0.0;
  std::vector<double> probs(vocab);
  for (int j = 0; j < pairs.size(); ++j) {
    const int row = pairs.positions[j];
    const int target = pairs.targets[j];
    if (row < 0 || row >= logits.rows()) throw std::out_of_range("cross_entropy: position outside logits");
    if (target < 0 || target >= vocab) throw std::out_of_range("cross_entropy: target outside vocabulary");
    const T* lr = logits.row(row);
    double max_logit = lr[0];
    for (int c = 1; c < vocab; ++c) max_logit = std::max(max_logit, static_cast<double>(lr[c]));
    double sum = 0.0;
    for (int c = 0; c < vocab; ++c) {
      probs[c] = std::exp(static_cast<double>(lr[c]) - max_logit);
      sum += probs[c];
    }
    total += std::log(sum) + max_logit - static_cast<double>(lr[target]);
    if (d_logits != nullptr) {
      T* dr = d_logits->row(row);
      for (int c = 0; c < vocab; ++c) dr[c] += static_cast<T>(grad_scale * probs[c] / sum);
      dr[target] -= static_cast<T>(grad_scale);
    }
  }
  return total / pairs.size();
}

template <typename T>
double ntp_loss(const Matrix<T>& base_logits, std::span<const int> labels) {
  const LeapSchedule ntp(1, 1);
  return cross_entropy(base_logits, align_leap_targets(labels, 1, ntp));
}

bool group_enabled(ParamGroup group, GradTargets targets) {
  switch (group) {
    case ParamGroup::kBackbone:
      return targets.backbone;
    case ParamGroup::kBaseHead:
      return targets.base_head;
    case ParamGroup::kExtraHeads:
      return targets.extra_heads;
  }
  return false;
}

template <typename T>
LossBreakdown leap_objective(const Model<T>& model, std::span<const Window> batch, std::span<const double> head_weights,
                             const LeapSchedule& schedule, Weights<T>* grads, GradTargets targets) {
  const int n_heads = schedule.n_heads();
  if (static_cast<int>(head_weights.size()) != n_heads)
    throw std::invalid_argument("leap_objective: one weight per head required");
  if (n_heads != static_cast<int>(model.config().n_pred_heads))
    throw std::invalid_argument("leap_objective: schedule head count differs from model");

  LossBreakdown out;
  out.per_head.assign(n_heads, 0.0);
  out.pairs_per_head.assign(n_heads, 0);
  std::vector<std::vector<LeapAlignment>> aligned(batch.size());
  for (std::size_t w = 0; w < batch.size(); ++w) {
    aligned[w].resize(n_heads);
    for (int h = 1; h <= n_heads; ++h) {
      if (head_weights[h - 1] == 0.0) continue;
      aligned[w][h - 1] = align_leap_targets(batch[w].tokens, h, schedule, batch[w].segment);
      out.pairs_per_head[h - 1] += aligned[w][h - 1].size();
    }
  }
  std::vector<int> active;
  for (int h = 1; h <= n_heads; ++h) {
    if (head_weights[h - 1] == 0.0) continue;
    if (out.pairs_per_head[h - 1] == 0) {
      out.skipped_heads.push_back(h);
    } else {
      active.push_back(h);
    }
  }
  if (active.empty()) throw std::invalid_argument("leap_objective: every weighted head was skipped (sequences too short)");

  const bool backbone_grad = grads != nullptr && targets.backbone;
  const KvCache<T> empty_cache(model.config());
  for (std::size_t w = 0; w < batch.size(); ++w) {
    const auto& tokens = batch[w].tokens;
    ForwardTape<T> tape;
    Matrix<T> hidden = backbone_grad ? model.forward_train(tokens, tape) : model.forward_causal(tokens, empty_cache).hidden;
    Matrix<T> d_hidden;
    if (backbone_grad) d_hidden = Matrix<T>(hidden.rows(), hidden.cols());
    for (int h : active) {
      const LeapAlignment& pairs = aligned[w][h - 1];
      if (pairs.size() == 0) continue;
      const double count = out.pairs_per_head[h - 1];
      Matrix<T> logits = model.logits(hidden, h);
      Matrix<T> d_logits;
      if (grads != nullptr) d_logits = Matrix<T>(logits.rows(), logits.cols());
      const double mean =
          cross_entropy(logits, pairs, grads != nullptr ? &d_logits : nullptr, head_weights[h - 1] / count);
      out.per_head[h - 1] += mean * pairs.size() / count;
      if (grads == nullptr) continue;
      Matrix<T>* dh = backbone_grad ? &d_hidden : nullptr;
      if (h == 1) {
        base_head_backward(hidden, model.weights().unembed, d_logits, grads->unembed, dh);
      } else {
        head_backward(hidden, model.weights().extra_heads[h - 2], d_logits, grads->extra_heads[h - 2], dh);
      }
    }
    if (backbone_grad) model.backward(tape, d_hidden, *grads);
  }
  for (int h : active) out.total += head_weights[h - 1] * out.per_head[h - 1];
  return out;
}

std::vector<double> stage_head_weights(Stage stage, int n_heads, double beta) {
  std::vector<double> w(n_heads, 0.0);
  switch (stage) {
    case Stage::kPretrain:
      w[0] = 1.0;
      break;
    case Stage::kWarmup:
      std::fill(w.begin() + 1, w.end(), 1.0);
      break;
    case Stage::kFull:
      w[0] = 1.0;
      std::fill(w.begin() + 1, w.end(), beta);
      break;
  }
  return w;
}

GradTargets stage_targets(Stage stage) {
  switch (stage) {
    case Stage::kPretrain:
      return {.backbone = true, .base_head = true, .extra_heads = false};
    case Stage::kWarmup:
      return {.backbone = false, .base_head = false, .extra_heads = true};
    case Stage::kFull:
      return {.backbone = true, .base_head = true, .extra_heads = true};
  }
  return {};
}

template <typename T>
LossBreakdown warmup_loss(const Model<T>& model, std::span<const Window> batch, const LeapSchedule& schedule,
                          Weights<T>* grads) {
  const auto weights = stage_head_weights(Stage::kWarmup, schedule.n_heads(), 0.0);
  return leap_objective(model, batch, weights, schedule, grads, stage_targets(Stage::kWarmup));
}

template <typename T>
LossBreakdown full_loss(const Model<T>& model, std::span<const Window> batch, double beta, const LeapSchedule& schedule,
                        Weights<T>* grads) {
  const auto weights = stage_head_weights(Stage::kFull, schedule.n_heads(), beta);
  return leap_objective(model, batch, weights, schedule, grads, stage_targets(Stage::kFull));
}

double evaluate_ntp(const ModelF& model, std::span<const Window> windows) {
  const LeapSchedule ntp(1, 1);
  const KvCache<float> empty(model.config());
  double total = 0.0;
  long count = 0;
  for (const auto& w : windows) {
    LeapAlignment pairs = align_leap_targets(w.tokens, 1, ntp, w.segment);
    if (pairs.size() == 0) continue;
    Matrix<float> hidden = model.forward_causal(w.tokens, empty).hidden;
    total += cross_entropy(model.logits(hidden, 1), pairs) * pairs.size();
    count += pairs.size();
  }
  if (count == 0) throw std::invalid_argument("evaluate_ntp: no scored positions");
  return total / static_cast<double>(count);
}

double cosine_lr(int step, int total_steps, double warmup_ratio, double base_lr) {
  if (total_steps <= 0) return base_lr;
  const int warm = static_cast<int>(std::ceil(warmup_ratio * total_steps));
  if (step < warm) return base_lr * static_cast<double>(step + 1) / warm;
  const int decay_steps = std::max(1, total_steps - warm);
  const double progress = std::min(1.0, static_cast<double>(step - warm) / decay_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
AdamW<T>::AdamW(const Weights<T>& shape, Options options) : options_(options), m_(shape), v_(shape) {
  m_.visit([](const std::string&, ParamGroup, Matrix<T>& m) { m.set_zero(); });
  v_.visit([](const std::string&, ParamGroup, Matrix<T>& m) { m.set_zero(); });
}

template <typename T>
void AdamW<T>::step(Weights<T>& params, const Weights<T>& grads, double lr, GradTargets targets) {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  std::vector<const Matrix<T>*> g;
  std::vector<Matrix<T>*> m;
  std::vector<Matrix<T>*> v;
  grads.visit([&](const std::string&, ParamGroup, const Matrix<T>& x) { g.push_back(&x); });
  m_.visit([&](const std::string&, ParamGroup, Matrix<T>& x) { m.push_back(&x); });
  v_.visit([&](const std::string&, ParamGroup, Matrix<T>& x) { v.push_back(&x); });
  std::size_t i = 0;
  params.visit([&](const std::string&, ParamGroup group, Matrix<T>& p) {
    const std::size_t idx = i++;
    if (!group_enabled(group, targets)) return;
    const bool decay = p.rows() > 1 && p.cols() > 1;
    T* pd = p.data();
    const T* gd = g[idx]->data();
    T* md = m[idx]->data();
    T* vd = v[idx]->data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double grad = gd[j];
      const double mj = options_.beta1 * md[j] + (1.0 - options_.beta1) * grad;
      const double vj = options_.beta2 * vd[j] + (1.0 - options_.beta2) * grad * grad;
      md[j] = static_cast<T>(mj);
      vd[j] = static_cast<T>(vj);
      double update = (mj / bc1) / (std::sqrt(vj / bc2) + options_.eps);
      if (decay) update += options_.weight_decay * pd[j];
      pd[j] = static_cast<T>(pd[j] - lr * update);
    }
  });
}

template <typename T>
double grad_norm(const Weights<T>& grads, GradTargets targets) {
  double sq = 0.0;
  grads.visit([&](const std::string&, ParamGroup group, const Matrix<T>& g) {
    if (!group_enabled(group, targets)) return;
    for (T x : g.flat()) sq += static_cast<double>(x) * x;
  });
  return std::sqrt(sq);
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kPretrain:
      return "pretrain";
    case Stage::kWarmup:
      return "warmup";
    case Stage::kFull:
      return "full";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  if (text == "pretrain") return Stage::kPretrain;
  if (text == "warmup") return Stage::kWarmup;
  if (text == "full") return Stage::kFull;
  throw std::invalid_argument("unknown stage '" + text + "' (expected pretrain, warmup or full)");
}

void TrainingConfig::validate() const {
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
  if (!std::isfinite(beta)) throw std::invalid_argument("beta must be finite");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0) throw std::invalid_argument("warmup_ratio must be in [0, 1]");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (grad_clip < 0.0) throw std::invalid_argument("grad_clip must be >= 0");
}

TrainingDivergedError::TrainingDivergedError(int step, double loss)
    : std::runtime_error("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) + ")"),
      step_(step) {}

TrainResult train(ModelF& model, std::span<const Window> windows, const TrainingConfig& config) {
  config.validate();
  TrainResult result;
  if (config.epochs == 0 || windows.empty()) return result;

  const LeapSchedule schedule = LeapSchedule::from(model.config());
  const auto head_weights = stage_head_weights(config.stage, schedule.n_heads(), config.beta);
  const GradTargets targets = stage_targets(config.stage);
  const int n_windows = static_cast<int>(windows.size());
  const int steps_per_epoch = (n_windows + config.batch_size - 1) / config.batch_size;
  int total_steps = steps_per_epoch * config.epochs;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  AdamW<float> optimizer(model.weights(), {.weight_decay = config.weight_decay});
  Weights<float> grads = Weights<float>::zeros(model.config());
  std::mt19937_64 rng(config.seed);
  std::vector<int> order(n_windows);
  std::vector<Window> batch;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs && step < total_steps; ++epoch) {
    for (int i = 0; i < n_windows; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n_windows && step < total_steps; start += config.batch_size) {
      batch.clear();
      for (int i = start; i < std::min(n_windows, start + config.batch_size); ++i) batch.push_back(windows[order[i]]);
      grads.visit([](const std::string&, ParamGroup, Matrix<float>& g) { g.set_zero(); });
      LossBreakdown loss;
      try {
        loss = leap_objective(model, batch, head_weights, schedule, &grads, targets);
      } catch (const NonFiniteError&) {
        throw TrainingDivergedError(step, std::numeric_limits<double>::quiet_NaN());
      }
      if (!std::isfinite(loss.total)) throw TrainingDivergedError(step, loss.total);
      for (int h : loss.skipped_heads)
        if (std::find(result.skipped_heads.begin(), result.skipped_heads.end(), h) == result.skipped_heads.end()) {
          result.skipped_heads.push_back(h);
          std::clog << "lmtp: head " << h << " had no supervision pairs at step " << step << " (sequence too short)\n";
        }
      if (config.grad_clip > 0.0) {
        const double norm = grad_norm(grads, targets);
        if (!std::isfinite(norm)) throw TrainingDivergedError(step, norm);
        if (norm > config.grad_clip) {
          const float s = static_cast<float>(config.grad_clip / norm);
          grads.visit([&](const std::string&, ParamGroup, Matrix<float>& g) {
            for (float& x : g.flat()) x *= s;
          });
        }
      }
      const double lr = cosine_lr(step, total_steps, config.warmup_ratio, config.lr);
      optimizer.step(model.weights(), grads, lr, targets);
      result.history.push_back({.step = step, .stage = config.stage, .lr = lr, .loss = loss.total});
      ++step;
    }
  }
  return result;
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write loss history: " + path);
  out << "step,stage,lr,loss\n";
  out.precision(9);
  for (const auto& r : history) out << r.step << ',' << to_string(r.stage) << ',' << r.lr << ',' << r.loss << '\n';
}

Corpus self_distill(const ModelF& model, const Corpus& prompts, int max_new, std::uint64_t /*seed*/) {
  if (max_new < 0) throw std::invalid_argument("self_distill: max_new must be >= 0");
  Corpus out;
  const int max_positions = static_cast<int>(model.config().max_positions);
  for (const auto& prompt : prompts.documents) {
    std::vector<int> doc = prompt;
    if (max_new > 0 && !prompt.empty()) {
      KvCache<float> cache(model.config());
      auto step = model.forward_causal(prompt, cache);
      cache.commit_all(step.pending);
      for (int produced = 0; produced < max_new; ++produced) {
        const auto logits = model.logits_row(step.hidden.row_span(step.hidden.rows() - 1), 1);
        const int next = argmax<float>(logits);
        doc.push_back(next);
        if (next == ByteTokenizer::kEos || cache.length() >= max_positions || produced + 1 == max_new) break;
        const int token[1] = {next};
        step = model.forward_causal(token, cache);
        cache.commit_all(step.pending);
      }
    }
    out.documents.push_back(std::move(doc));
  }
  return out;
}

template double cross_entropy(const Matrix<float>&, const LeapAlignment&, Matrix<float>*, double);
template double cross_entropy(const Matrix<double>&, const LeapAlignment&, Matrix<double>*, double);
template double ntp_loss(const Matrix<float>&, std::span<const int>);
template double ntp_loss(const Matrix<double>&, std::span<const int>);
template LossBreakdown leap_objective(const Model<float>&, std::span<const Window>, std::span<const double>,
                                      const LeapSchedule&, Weights<float>*, GradTargets);
template LossBreakdown leap_objective(const Model<double>&, std::span<const Window>, std::span<const double>,
                                      const LeapSchedule&, Weights<double>*, GradTargets);
template LossBreakdown warmup_loss(const Model<float>&, std::span<const Window>, const LeapSchedule&, Weights<float>*);
template LossBreakdown warmup_loss(const Model<double>&, std::span<const Window>, const LeapSchedule&,
                                   Weights<double>*);
template LossBreakdown full_loss(const Model<float>&, std::span<const Window>, double, const LeapSchedule&,
                                 Weights<float>*);
template LossBreakdown full_loss(const Model<double>&, std::span<const Window>, double, const LeapSchedule&,
                                 Weights<double>*);
template class AdamW<float>;
template class AdamW<double>;
template double grad_norm(const Weights<float>&, GradTargets);
template double grad_norm(const Weights<double>&, GradTargets);

}  // namespace lmtp
