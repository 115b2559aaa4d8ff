#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lmtp/matrix.hpp"
#include "lmtp/model_config.hpp"

namespace lmtp {

/// Raised when an activation or logit becomes NaN/inf. Never clamped.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which freeze group a parameter belongs to.
enum class ParamGroup { kBackbone, kBaseHead, kExtraHeads };

/// Boolean (query x key) mask; true means the query may attend to the key.
/// Key columns are ordered as [committed cache rows..., new rows...].
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(int queries, int keys) : queries_(queries), keys_(keys), allow_(static_cast<std::size_t>(queries) * keys, 0) {}

  /// Query q (new row q) sees every cached row and new rows 0..q.
  static AttentionMask causal(int cache_len, int n_new);

  int queries() const { return queries_; }
  int keys() const { return keys_; }
  bool allowed(int q, int k) const { return allow_[static_cast<std::size_t>(q) * keys_ + k] != 0; }
  void set(int q, int k, bool value) { allow_[static_cast<std::size_t>(q) * keys_ + k] = value ? 1 : 0; }

  bool operator==(const AttentionMask&) const = default;

 private:
  int queries_ = 0;
  int keys_ = 0;
  std::vector<std::uint8_t> allow_;
};

// Linear weights are stored input-major (in x out) so that y = x * W + b.

template <typename T>
struct BlockWeights {
  Matrix<T> ln1_gain, ln1_bias;
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> ln2_gain, ln2_bias;
  Matrix<T> w_up, b_up, w_down, b_down;

  bool operator==(const BlockWeights&) const = default;
};

/// Extra output head: logits = (z + SiLU(z W + b)) W_out.
template <typename T>
struct PredictionHead {
  int index = 2;  // 1-based; the base head (index 1) is the model's unembedding
  Matrix<T> w;    // d x d
  Matrix<T> b;    // 1 x d
  Matrix<T> out;  // d x vocab

  bool operator==(const PredictionHead&) const = default;
};

template <typename T>
struct Weights {
  Matrix<T> tok_emb;  // vocab x d
  Matrix<T> pos_emb;  // max_positions x d
  std::vector<BlockWeights<T>> blocks;
  Matrix<T> lnf_gain, lnf_bias;
  Matrix<T> unembed;  // d x vocab, the base (head 1) unembedding
  std::vector<PredictionHead<T>> extra_heads;

  /// Correctly shaped, all-zero weights.
  static Weights zeros(const ModelConfig& config);

  bool operator==(const Weights&) const = default;

  /// Calls f(name, group, matrix) for every parameter in checkpoint order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("tok_emb"), ParamGroup::kBackbone, self.tok_emb);
    f(std::string("pos_emb"), ParamGroup::kBackbone, self.pos_emb);
    for (std::size_t l = 0; l < self.blocks.size(); ++l) {
      auto& b = self.blocks[l];
      const std::string p = "blocks." + std::to_string(l) + ".";
      f(p + "ln1.gain", ParamGroup::kBackbone, b.ln1_gain);
      f(p + "ln1.bias", ParamGroup::kBackbone, b.ln1_bias);
      f(p + "attn.wq", ParamGroup::kBackbone, b.wq);
      f(p + "attn.bq", ParamGroup::kBackbone, b.bq);
      f(p + "attn.wk", ParamGroup::kBackbone, b.wk);
      f(p + "attn.bk", ParamGroup::kBackbone, b.bk);
      f(p + "attn.wv", ParamGroup::kBackbone, b.wv);
      f(p + "attn.bv", ParamGroup::kBackbone, b.bv);
      f(p + "attn.wo", ParamGroup::kBackbone, b.wo);
      f(p + "attn.bo", ParamGroup::kBackbone, b.bo);
      f(p + "ln2.gain", ParamGroup::kBackbone, b.ln2_gain);
      f(p + "ln2.bias", ParamGroup::kBackbone, b.ln2_bias);
      f(p + "mlp.w_up", ParamGroup::kBackbone, b.w_up);
      f(p + "mlp.b_up", ParamGroup::kBackbone, b.b_up);
      f(p + "mlp.w_down", ParamGroup::kBackbone, b.w_down);
      f(p + "mlp.b_down", ParamGroup::kBackbone, b.b_down);
    }
    f(std::string("lnf.gain"), ParamGroup::kBackbone, self.lnf_gain);
    f(std::string("lnf.bias"), ParamGroup::kBackbone, self.lnf_bias);
    f(std::string("unembed"), ParamGroup::kBaseHead, self.unembed);
    for (auto& h : self.extra_heads) {
      const std::string p = "heads." + std::to_string(h.index) + ".";
      f(p + "w", ParamGroup::kExtraHeads, h.w);
      f(p + "b", ParamGroup::kExtraHeads, h.b);
      f(p + "out", ParamGroup::kExtraHeads, h.out);
    }
  }
};

/// Uncommitted keys/values produced by one forward pass (one matrix per layer,
/// one row per input token).
template <typename T>
struct PendingKv {
  std::vector<Matrix<T>> keys;
  std::vector<Matrix<T>> values;
  int rows() const { return keys.empty() ? 0 : keys.front().rows(); }
};

/// Committed per-layer keys/values of accepted positions.
template <typename T>
class KvCache {
 public:
  KvCache() = default;
  explicit KvCache(const ModelConfig& config);

  int length() const { return length_; }
  int n_layers() const { return static_cast<int>(keys_.size()); }
  const Matrix<T>& keys(int layer) const { return keys_[layer]; }
  const Matrix<T>& values(int layer) const { return values_[layer]; }

  /// Appends the selected pending rows, in the given order.
  void commit(const PendingKv<T>& pending, std::span<const int> rows);
  void commit_all(const PendingKv<T>& pending);
  void truncate(int length);

 private:
  std::vector<Matrix<T>> keys_;
  std::vector<Matrix<T>> values_;
  int length_ = 0;
};

template <typename T>
struct ForwardResult {
  Matrix<T> hidden;  // final-layer (post-norm) hidden row per input token
  PendingKv<T> pending;
};

/// Activations recorded by the training forward pass.
template <typename T>
struct LayerTape {
  Matrix<T> ln1_xhat;
  std::vector<T> ln1_rstd;
  Matrix<T> ln1_out, q, k, v;
  Matrix<T> probs;  // (heads * S) x S, zero where masked
  Matrix<T> attn;
  Matrix<T> ln2_xhat;
  std::vector<T> ln2_rstd;
  Matrix<T> ln2_out, up_pre, up_act;
};

template <typename T>
struct ForwardTape {
  std::vector<int> tokens;
  std::vector<LayerTape<T>> layers;
  Matrix<T> lnf_xhat;
  std::vector<T> lnf_rstd;
};

/// Decoder-only pre-norm transformer with learned absolute positions.
///
/// Every kernel computes each output row with a fixed operation order that
/// does not depend on how many rows are in the batch, so a token's hidden row
/// is bit-identical whether it is processed alone, in a chunk, or as a node in
/// a masked tree batch with the same visible keys.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config);

  /// Random backbone; extra heads initialized from the base unembedding.
  static Model random(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Weights<T>& weights() { return weights_; }
  const Weights<T>& weights() const { return weights_; }

  /// Scores `tokens` at explicit `positions` against `cache`, without mutating it.
  ForwardResult<T> forward(std::span<const int> tokens, std::span<const int> positions,
                           const AttentionMask& mask, const KvCache<T>& cache) const;

  /// Plain causal continuation of the cache.
  ForwardResult<T> forward_causal(std::span<const int> tokens, const KvCache<T>& cache) const;

  /// Full causal pass from an empty cache that records activations in `tape`.
  Matrix<T> forward_train(std::span<const int> tokens, ForwardTape<T>& tape) const;

  /// Accumulates parameter gradients of the backbone given dLoss/dHidden.
  void backward(const ForwardTape<T>& tape, const Matrix<T>& d_hidden, Weights<T>& grads) const;

  /// Logits of the 1-based head `head` for every hidden row.
  Matrix<T> logits(const Matrix<T>& hidden, int head) const;
  std::vector<T> logits_row(std::span<const T> hidden_row, int head) const;

  /// Re-initializes heads 2..n from the current base unembedding.
  void reset_extra_heads();

  template <typename U>
  Model<U> cast() const;

  bool operator==(const Model&) const = default;

 private:
  ModelConfig config_;
  Weights<T> weights_;
};

/// Base head: logits = z * unembed.
template <typename T>
Matrix<T> base_logits(const Matrix<T>& hidden, const Matrix<T>& unembed);

/// logits = (z + SiLU(z W + b)) W_out.
template <typename T>
Matrix<T> head_logits(const Matrix<T>& hidden, const PredictionHead<T>& head);

/// Heads 2..n with W = 0, b = 0 and W_out copied from the base unembedding.
/// Head 1 is the base unembedding itself and is not part of the returned list.
template <typename T>
std::vector<PredictionHead<T>> init_heads(const Matrix<T>& base_unembedding, const ModelConfig& config);

/// Backprop through the base head. Accumulates into d_unembed and d_hidden.
template <typename T>
void base_head_backward(const Matrix<T>& hidden, const Matrix<T>& unembed, const Matrix<T>& d_logits,
                        Matrix<T>& d_unembed, Matrix<T>* d_hidden);

/// Backprop through an extra head. Accumulates into grad and (optionally) d_hidden.
template <typename T>
void head_backward(const Matrix<T>& hidden, const PredictionHead<T>& head, const Matrix<T>& d_logits,
                   PredictionHead<T>& grad, Matrix<T>* d_hidden);

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out(config_);
  auto& dst = out.weights();
  std::vector<const Matrix<T>*> src;
  weights_.visit([&](const std::string&, ParamGroup, const Matrix<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  dst.visit([&](const std::string&, ParamGroup, Matrix<U>& m) { m = matrix_cast<U>(*src[i++]); });
  return out;
}

using ModelF = Model<float>;
using ModelD = Model<double>;

}  // namespace lmtp
