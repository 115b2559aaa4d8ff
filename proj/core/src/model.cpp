#include "lmtp/model.hpp"

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "kernels.hpp"

namespace lmtp {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<EMat<T>> emap(Matrix<T>& m) {
  return {m.data(), m.rows(), m.cols()};
}
template <typename T>
Eigen::Map<const EMat<T>> emap(const Matrix<T>& m) {
  return {m.data(), m.rows(), m.cols()};
}

template <typename T>
void add_column_sums(const Matrix<T>& d, Matrix<T>& bias_grad) {
  emap(bias_grad).row(0) += emap(d).colwise().sum();
}

/// y = x W + b backward: dW += x^T dy, db += colsum(dy), returns dy W^T.
template <typename T>
Matrix<T> linear_backward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& dy, Matrix<T>& dw,
                          Matrix<T>* db) {
  emap(dw).noalias() += emap(x).transpose() * emap(dy);
  if (db != nullptr) add_column_sums(dy, *db);
  Matrix<T> dx(x.rows(), x.cols());
  emap(dx).noalias() = emap(dy) * emap(w).transpose();
  return dx;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& xhat, const std::vector<T>& rstd, const Matrix<T>& gain,
                              const Matrix<T>& dy, Matrix<T>& dgain, Matrix<T>& dbias) {
  const int rows = xhat.rows();
  const int d = xhat.cols();
  Matrix<T> dx(rows, d);
  std::vector<T> dxhat(d);
  for (int r = 0; r < rows; ++r) {
    T mean_dxhat = 0;
    T mean_dxhat_xhat = 0;
    for (int c = 0; c < d; ++c) {
      dgain(0, c) += dy(r, c) * xhat(r, c);
      dbias(0, c) += dy(r, c);
      dxhat[c] = dy(r, c) * gain(0, c);
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * xhat(r, c);
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    for (int c = 0; c < d; ++c) dx(r, c) = rstd[r] * (dxhat[c] - mean_dxhat - xhat(r, c) * mean_dxhat_xhat);
  }
  return dx;
}

template <typename T>
void add_in_place(Matrix<T>& a, const Matrix<T>& b) {
  T* pa = a.data();
  const T* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

template <typename T>
void check_finite(const Matrix<T>& m, const char* what) {
  if (!detail::all_finite(m.flat())) throw NonFiniteError(std::string("non-finite values in ") + what);
}

}  // namespace

AttentionMask AttentionMask::causal(int cache_len, int n_new) {
  AttentionMask mask(n_new, cache_len + n_new);
  for (int q = 0; q < n_new; ++q)
    for (int k = 0; k <= cache_len + q; ++k) mask.set(q, k, true);
  return mask;
}

template <typename T>
Weights<T> Weights<T>::zeros(const ModelConfig& c) {
  c.validate();
  const int d = static_cast<int>(c.d_model);
  const int v = static_cast<int>(c.vocab_size);
  const int m = static_cast<int>(c.mlp_dim());
  Weights w;
  w.tok_emb = Matrix<T>(v, d);
  w.pos_emb = Matrix<T>(static_cast<int>(c.max_positions), d);
  w.blocks.resize(c.n_layers);
  for (auto& b : w.blocks) {
    b.ln1_gain = Matrix<T>(1, d);
    b.ln1_bias = Matrix<T>(1, d);
    b.wq = Matrix<T>(d, d);
    b.bq = Matrix<T>(1, d);
    b.wk = Matrix<T>(d, d);
    b.bk = Matrix<T>(1, d);
    b.wv = Matrix<T>(d, d);
    b.bv = Matrix<T>(1, d);
    b.wo = Matrix<T>(d, d);
    b.bo = Matrix<T>(1, d);
    b.ln2_gain = Matrix<T>(1, d);
    b.ln2_bias = Matrix<T>(1, d);
    b.w_up = Matrix<T>(d, m);
    b.b_up = Matrix<T>(1, m);
    b.w_down = Matrix<T>(m, d);
    b.b_down = Matrix<T>(1, d);
  }
  w.lnf_gain = Matrix<T>(1, d);
  w.lnf_bias = Matrix<T>(1, d);
  w.unembed = Matrix<T>(d, v);
  for (std::uint32_t i = 2; i <= c.n_pred_heads; ++i) {
    PredictionHead<T> h;
    h.index = static_cast<int>(i);
    h.w = Matrix<T>(d, d);
    h.b = Matrix<T>(1, d);
    h.out = Matrix<T>(d, v);
    w.extra_heads.push_back(std::move(h));
  }
  return w;
}

template <typename T>
KvCache<T>::KvCache(const ModelConfig& config) : keys_(config.n_layers), values_(config.n_layers) {
  for (auto& k : keys_) k = Matrix<T>(0, static_cast<int>(config.d_model));
  for (auto& v : values_) v = Matrix<T>(0, static_cast<int>(config.d_model));
}

template <typename T>
void KvCache<T>::commit(const PendingKv<T>& pending, std::span<const int> rows) {
  if (pending.keys.size() != keys_.size()) throw std::invalid_argument("KvCache::commit: layer count mismatch");
  for (std::size_t l = 0; l < keys_.size(); ++l) {
    for (int r : rows) {
      if (r < 0 || r >= pending.keys[l].rows()) throw std::out_of_range("KvCache::commit: row out of range");
      keys_[l].append_row(pending.keys[l].row_span(r));
      values_[l].append_row(pending.values[l].row_span(r));
    }
  }
  length_ += static_cast<int>(rows.size());
}

template <typename T>
void KvCache<T>::commit_all(const PendingKv<T>& pending) {
  std::vector<int> rows(pending.rows());
  for (int i = 0; i < pending.rows(); ++i) rows[i] = i;
  commit(pending, rows);
}

template <typename T>
void KvCache<T>::truncate(int length) {
  if (length < 0 || length > length_) throw std::out_of_range("KvCache::truncate: bad length");
  for (auto& k : keys_) k.truncate_rows(length);
  for (auto& v : values_) v.truncate_rows(length);
  length_ = length;
}

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config), weights_(Weights<T>::zeros(config)) {}

template <typename T>
Model<T> Model<T>::random(const ModelConfig& config, std::uint64_t seed) {
  Model model(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double base_std = 0.02;
  const double residual_std = base_std / std::sqrt(2.0 * config.n_layers);
  auto fill = [&](Matrix<T>& m, double std) {
    for (auto& v : m.flat()) v = static_cast<T>(normal(rng) * std);
  };
  auto& w = model.weights_;
  fill(w.tok_emb, base_std);
  fill(w.pos_emb, base_std);
  for (auto& b : w.blocks) {
    std::fill(b.ln1_gain.data(), b.ln1_gain.data() + b.ln1_gain.size(), T(1));
    std::fill(b.ln2_gain.data(), b.ln2_gain.data() + b.ln2_gain.size(), T(1));
    fill(b.wq, base_std);
    fill(b.wk, base_std);
    fill(b.wv, base_std);
    fill(b.wo, residual_std);
    fill(b.w_up, base_std);
    fill(b.w_down, residual_std);
  }
  std::fill(w.lnf_gain.data(), w.lnf_gain.data() + w.lnf_gain.size(), T(1));
  fill(w.unembed, base_std);
  model.reset_extra_heads();
  return model;
}

template <typename T>
void Model<T>::reset_extra_heads() {
  weights_.extra_heads = init_heads(weights_.unembed, config_);
}

template <typename T>
ForwardResult<T> Model<T>::forward(std::span<const int> tokens, std::span<const int> positions,
                                   const AttentionMask& mask, const KvCache<T>& cache) const {
  const int n = static_cast<int>(tokens.size());
  const int cached = cache.length();
  const int d = static_cast<int>(config_.d_model);
  const int n_heads = static_cast<int>(config_.n_attn_heads);
  const int hd = static_cast<int>(config_.head_dim());
  if (positions.size() != tokens.size()) throw std::invalid_argument("forward: tokens/positions length mismatch");
  if (mask.queries() != n || mask.keys() != cached + n) throw std::invalid_argument("forward: mask shape mismatch");
  if (cache.n_layers() != static_cast<int>(config_.n_layers)) throw std::invalid_argument("forward: cache not shaped for this model");

  Matrix<T> x(n, d);
  for (int r = 0; r < n; ++r) {
    if (tokens[r] < 0 || tokens[r] >= static_cast<int>(config_.vocab_size))
      throw std::out_of_range("forward: token id out of range");
    if (positions[r] < 0 || positions[r] >= static_cast<int>(config_.max_positions))
      throw std::out_of_range("forward: position out of range");
    const T* te = weights_.tok_emb.row(tokens[r]);
    const T* pe = weights_.pos_emb.row(positions[r]);
    T* xr = x.row(r);
    for (int c = 0; c < d; ++c) xr[c] = te[c] + pe[c];
  }

  ForwardResult<T> result;
  result.pending.keys.reserve(config_.n_layers);
  result.pending.values.reserve(config_.n_layers);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<T> scores(static_cast<std::size_t>(cached + n));
  std::vector<int> visible;
  visible.reserve(cached + n);
  std::vector<T> acc(hd);

  for (std::size_t l = 0; l < weights_.blocks.size(); ++l) {
    const auto& blk = weights_.blocks[l];
    Matrix<T> a = detail::layer_norm(x, blk.ln1_gain, blk.ln1_bias);
    Matrix<T> q = detail::linear(a, blk.wq, &blk.bq);
    Matrix<T> k = detail::linear(a, blk.wk, &blk.bk);
    Matrix<T> v = detail::linear(a, blk.wv, &blk.bv);
    const Matrix<T>& ck = cache.keys(static_cast<int>(l));
    const Matrix<T>& cv = cache.values(static_cast<int>(l));
    auto key_row = [&](int j) { return j < cached ? ck.row(j) : k.row(j - cached); };
    auto value_row = [&](int j) { return j < cached ? cv.row(j) : v.row(j - cached); };

    Matrix<T> attn(n, d);
    for (int r = 0; r < n; ++r) {
      visible.clear();
      for (int j = 0; j < cached + n; ++j)
        if (mask.allowed(r, j)) visible.push_back(j);
      if (visible.empty()) throw std::invalid_argument("forward: a query row attends to nothing");
      for (int h = 0; h < n_heads; ++h) {
        const T* qh = q.row(r) + h * hd;
        T max_score = -std::numeric_limits<T>::infinity();
        for (std::size_t idx = 0; idx < visible.size(); ++idx) {
          const T* kh = key_row(visible[idx]) + h * hd;
          T dot = 0;
          for (int c = 0; c < hd; ++c) dot += qh[c] * kh[c];
          scores[idx] = dot * scale;
          max_score = std::max(max_score, scores[idx]);
        }
        T sum = 0;
        std::fill(acc.begin(), acc.end(), T(0));
        for (std::size_t idx = 0; idx < visible.size(); ++idx) {
          const T p = std::exp(scores[idx] - max_score);
          sum += p;
          const T* vh = value_row(visible[idx]) + h * hd;
          for (int c = 0; c < hd; ++c) acc[c] += p * vh[c];
        }
        T* out = attn.row(r) + h * hd;
        for (int c = 0; c < hd; ++c) out[c] = acc[c] / sum;
      }
    }
    Matrix<T> proj = detail::linear(attn, blk.wo, &blk.bo);
    add_in_place(x, proj);
    Matrix<T> b = detail::layer_norm(x, blk.ln2_gain, blk.ln2_bias);
    Matrix<T> up = detail::linear(b, blk.w_up, &blk.b_up);
    for (auto& u : up.flat()) u = detail::gelu(u);
    Matrix<T> down = detail::linear(up, blk.w_down, &blk.b_down);
    add_in_place(x, down);
    result.pending.keys.push_back(std::move(k));
    result.pending.values.push_back(std::move(v));
  }
  result.hidden = detail::layer_norm(x, weights_.lnf_gain, weights_.lnf_bias);
  check_finite(result.hidden, "hidden states");
  return result;
}

template <typename T>
ForwardResult<T> Model<T>::forward_causal(std::span<const int> tokens, const KvCache<T>& cache) const {
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) positions[i] = cache.length() + static_cast<int>(i);
  return forward(tokens, positions, AttentionMask::causal(cache.length(), static_cast<int>(tokens.size())), cache);
}

template <typename T>
Matrix<T> Model<T>::forward_train(std::span<const int> tokens, ForwardTape<T>& tape) const {
  const int n = static_cast<int>(tokens.size());
  const int d = static_cast<int>(config_.d_model);
  const int n_heads = static_cast<int>(config_.n_attn_heads);
  const int hd = static_cast<int>(config_.head_dim());
  if (n > static_cast<int>(config_.max_positions)) throw std::out_of_range("forward_train: sequence longer than max_positions");

  tape.tokens.assign(tokens.begin(), tokens.end());
  tape.layers.assign(weights_.blocks.size(), LayerTape<T>{});
  Matrix<T> x(n, d);
  for (int r = 0; r < n; ++r) {
    if (tokens[r] < 0 || tokens[r] >= static_cast<int>(config_.vocab_size))
      throw std::out_of_range("forward_train: token id out of range");
    const T* te = weights_.tok_emb.row(tokens[r]);
    const T* pe = weights_.pos_emb.row(r);
    for (int c = 0; c < d; ++c) x(r, c) = te[c] + pe[c];
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  for (std::size_t l = 0; l < weights_.blocks.size(); ++l) {
    const auto& blk = weights_.blocks[l];
    auto& t = tape.layers[l];
    t.ln1_out = detail::layer_norm(x, blk.ln1_gain, blk.ln1_bias, &t.ln1_xhat, &t.ln1_rstd);
    t.q = detail::linear(t.ln1_out, blk.wq, &blk.bq);
    t.k = detail::linear(t.ln1_out, blk.wk, &blk.bk);
    t.v = detail::linear(t.ln1_out, blk.wv, &blk.bv);
    t.probs = Matrix<T>(n_heads * n, n);
    t.attn = Matrix<T>(n, d);
    for (int h = 0; h < n_heads; ++h) {
      for (int r = 0; r < n; ++r) {
        T* p = t.probs.row(h * n + r);
        const T* qh = t.q.row(r) + h * hd;
        T max_score = -std::numeric_limits<T>::infinity();
        for (int j = 0; j <= r; ++j) {
          const T* kh = t.k.row(j) + h * hd;
          T dot = 0;
          for (int c = 0; c < hd; ++c) dot += qh[c] * kh[c];
          p[j] = dot * scale;
          max_score = std::max(max_score, p[j]);
        }
        T sum = 0;
        for (int j = 0; j <= r; ++j) {
          p[j] = std::exp(p[j] - max_score);
          sum += p[j];
        }
        T* out = t.attn.row(r) + h * hd;
        for (int j = 0; j <= r; ++j) {
          p[j] /= sum;
          const T* vh = t.v.row(j) + h * hd;
          for (int c = 0; c < hd; ++c) out[c] += p[j] * vh[c];
        }
      }
    }
    add_in_place(x, detail::linear(t.attn, blk.wo, &blk.bo));
    t.ln2_out = detail::layer_norm(x, blk.ln2_gain, blk.ln2_bias, &t.ln2_xhat, &t.ln2_rstd);
    t.up_pre = detail::linear(t.ln2_out, blk.w_up, &blk.b_up);
    t.up_act = t.up_pre;
    for (auto& u : t.up_act.flat()) u = detail::gelu(u);
    add_in_place(x, detail::linear(t.up_act, blk.w_down, &blk.b_down));
  }
  Matrix<T> hidden = detail::layer_norm(x, weights_.lnf_gain, weights_.lnf_bias, &tape.lnf_xhat, &tape.lnf_rstd);
  check_finite(hidden, "hidden states");
  return hidden;
}

template <typename T>
void Model<T>::backward(const ForwardTape<T>& tape, const Matrix<T>& d_hidden, Weights<T>& grads) const {
  const int n = static_cast<int>(tape.tokens.size());
  const int n_heads = static_cast<int>(config_.n_attn_heads);
  const int hd = static_cast<int>(config_.head_dim());
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  Matrix<T> dx = layer_norm_backward(tape.lnf_xhat, tape.lnf_rstd, weights_.lnf_gain, d_hidden, grads.lnf_gain,
                                     grads.lnf_bias);
  for (int l = static_cast<int>(weights_.blocks.size()) - 1; l >= 0; --l) {
    const auto& blk = weights_.blocks[l];
    auto& g = grads.blocks[l];
    const auto& t = tape.layers[l];

    // MLP residual branch.
    Matrix<T> d_act = linear_backward(t.up_act, blk.w_down, dx, g.w_down, &g.b_down);
    for (std::size_t i = 0; i < d_act.size(); ++i) d_act.data()[i] *= detail::gelu_grad(t.up_pre.data()[i]);
    Matrix<T> d_ln2 = linear_backward(t.ln2_out, blk.w_up, d_act, g.w_up, &g.b_up);
    add_in_place(dx, layer_norm_backward(t.ln2_xhat, t.ln2_rstd, blk.ln2_gain, d_ln2, g.ln2_gain, g.ln2_bias));

    // Attention residual branch.
    Matrix<T> d_attn = linear_backward(t.attn, blk.wo, dx, g.wo, &g.bo);
    Matrix<T> dq(n, static_cast<int>(config_.d_model));
    Matrix<T> dk(n, static_cast<int>(config_.d_model));
    Matrix<T> dv(n, static_cast<int>(config_.d_model));
    std::vector<T> dp(n);
    for (int h = 0; h < n_heads; ++h) {
      for (int r = 0; r < n; ++r) {
        const T* p = t.probs.row(h * n + r);
        const T* dout = d_attn.row(r) + h * hd;
        T dot_sum = 0;
        for (int j = 0; j <= r; ++j) {
          const T* vh = t.v.row(j) + h * hd;
          T s = 0;
          for (int c = 0; c < hd; ++c) s += dout[c] * vh[c];
          dp[j] = s;
          dot_sum += p[j] * s;
          T* dvh = dv.row(j) + h * hd;
          for (int c = 0; c < hd; ++c) dvh[c] += p[j] * dout[c];
        }
        const T* qh = t.q.row(r) + h * hd;
        T* dqh = dq.row(r) + h * hd;
        for (int j = 0; j <= r; ++j) {
          const T ds = p[j] * (dp[j] - dot_sum) * scale;
          const T* kh = t.k.row(j) + h * hd;
          T* dkh = dk.row(j) + h * hd;
          for (int c = 0; c < hd; ++c) {
            dqh[c] += ds * kh[c];
            dkh[c] += ds * qh[c];
          }
        }
      }
    }
    Matrix<T> d_ln1 = linear_backward(t.ln1_out, blk.wq, dq, g.wq, &g.bq);
    add_in_place(d_ln1, linear_backward(t.ln1_out, blk.wk, dk, g.wk, &g.bk));
    add_in_place(d_ln1, linear_backward(t.ln1_out, blk.wv, dv, g.wv, &g.bv));
    add_in_place(dx, layer_norm_backward(t.ln1_xhat, t.ln1_rstd, blk.ln1_gain, d_ln1, g.ln1_gain, g.ln1_bias));
  }
  const int d = static_cast<int>(config_.d_model);
  for (int r = 0; r < n; ++r) {
    T* gt = grads.tok_emb.row(tape.tokens[r]);
    T* gp = grads.pos_emb.row(r);
    for (int c = 0; c < d; ++c) {
      gt[c] += dx(r, c);
      gp[c] += dx(r, c);
    }
  }
}

template <typename T>
Matrix<T> Model<T>::logits(const Matrix<T>& hidden, int head) const {
  if (head < 1 || head > static_cast<int>(config_.n_pred_heads)) throw std::out_of_range("logits: head index out of range");
  if (head == 1) return base_logits(hidden, weights_.unembed);
  return head_logits(hidden, weights_.extra_heads[head - 2]);
}

template <typename T>
std::vector<T> Model<T>::logits_row(std::span<const T> hidden_row, int head) const {
  Matrix<T> h(1, static_cast<int>(hidden_row.size()));
  std::copy(hidden_row.begin(), hidden_row.end(), h.data());
  Matrix<T> out = logits(h, head);
  return {out.data(), out.data() + out.size()};
}

template <typename T>
Matrix<T> base_logits(const Matrix<T>& hidden, const Matrix<T>& unembed) {
  if (hidden.cols() != unembed.rows()) throw std::invalid_argument("base_logits: dimension mismatch");
  Matrix<T> out = detail::linear(hidden, unembed, static_cast<const Matrix<T>*>(nullptr));
  check_finite(out, "base-head logits");
  return out;
}

template <typename T>
Matrix<T> head_logits(const Matrix<T>& hidden, const PredictionHead<T>& head) {
  if (hidden.cols() != head.w.rows() || hidden.cols() != head.out.rows())
    throw std::invalid_argument("head_logits: dimension mismatch");
  Matrix<T> z = detail::linear(hidden, head.w, &head.b);
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = hidden.data()[i] + detail::silu(z.data()[i]);
  Matrix<T> out = detail::linear(z, head.out, static_cast<const Matrix<T>*>(nullptr));
  check_finite(out, "head logits");
  return out;
}

template <typename T>
std::vector<PredictionHead<T>> init_heads(const Matrix<T>& base_unembedding, const ModelConfig& config) {
  const int d = static_cast<int>(config.d_model);
  if (base_unembedding.rows() != d || base_unembedding.cols() != static_cast<int>(config.vocab_size))
    throw std::invalid_argument("init_heads: unembedding shape does not match config");
  std::vector<PredictionHead<T>> heads;
  for (std::uint32_t i = 2; i <= config.n_pred_heads; ++i) {
    PredictionHead<T> h;
    h.index = static_cast<int>(i);
    h.w = Matrix<T>(d, d);
    h.b = Matrix<T>(1, d);
    h.out = base_unembedding;
    heads.push_back(std::move(h));
  }
  return heads;
}

template <typename T>
void base_head_backward(const Matrix<T>& hidden, const Matrix<T>& unembed, const Matrix<T>& d_logits,
                        Matrix<T>& d_unembed, Matrix<T>* d_hidden) {
  emap(d_unembed).noalias() += emap(hidden).transpose() * emap(d_logits);
  if (d_hidden != nullptr) emap(*d_hidden).noalias() += emap(d_logits) * emap(unembed).transpose();
}

template <typename T>
void head_backward(const Matrix<T>& hidden, const PredictionHead<T>& head, const Matrix<T>& d_logits,
                   PredictionHead<T>& grad, Matrix<T>* d_hidden) {
  Matrix<T> pre = detail::linear(hidden, head.w, &head.b);
  Matrix<T> z = hidden;
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += detail::silu(pre.data()[i]);
  emap(grad.out).noalias() += emap(z).transpose() * emap(d_logits);
  Matrix<T> dz(hidden.rows(), hidden.cols());
  emap(dz).noalias() = emap(d_logits) * emap(head.out).transpose();
  Matrix<T> dpre = dz;
  for (std::size_t i = 0; i < dpre.size(); ++i) dpre.data()[i] *= detail::silu_grad(pre.data()[i]);
  emap(grad.w).noalias() += emap(hidden).transpose() * emap(dpre);
  add_column_sums(dpre, grad.b);
  if (d_hidden != nullptr) {
    add_in_place(*d_hidden, dz);
    emap(*d_hidden).noalias() += emap(dpre) * emap(head.w).transpose();
  }
}

#define LMTP_INSTANTIATE(T)                                                                                    \
  template struct Weights<T>;                                                                                  \
  template class KvCache<T>;                                                                                   \
  template class Model<T>;                                                                                     \
  template Matrix<T> base_logits(const Matrix<T>&, const Matrix<T>&);                                          \
  template Matrix<T> head_logits(const Matrix<T>&, const PredictionHead<T>&);                                  \
  template std::vector<PredictionHead<T>> init_heads(const Matrix<T>&, const ModelConfig&);                    \
  template void base_head_backward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, Matrix<T>&,           \
                                   Matrix<T>*);                                                                \
  template void head_backward(const Matrix<T>&, const PredictionHead<T>&, const Matrix<T>&, PredictionHead<T>&, \
                              Matrix<T>*);

LMTP_INSTANTIATE(float)
LMTP_INSTANTIATE(double)

#undef LMTP_INSTANTIATE

}  // namespace lmtp
