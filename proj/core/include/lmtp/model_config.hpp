#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lmtp {

/// Shape of the toy causal LM plus the leap head layout.
///
/// `n_pred_heads` is the number of output heads including the base head;
/// `leap_stride` is the number of positions jumped between consecutive head
/// targets (1 gives plain multi-token prediction).
struct ModelConfig {
  std::uint32_t vocab_size = 258;
  std::uint32_t d_model = 128;
  std::uint32_t n_layers = 4;
  std::uint32_t n_attn_heads = 4;
  std::uint32_t max_positions = 512;
  std::uint32_t n_pred_heads = 4;
  std::uint32_t leap_stride = 2;

  /// Throws std::invalid_argument on the first violated invariant.
  void validate() const;

  std::uint32_t head_dim() const { return d_model / n_attn_heads; }
  std::uint32_t mlp_dim() const { return 4 * d_model; }

  bool operator==(const ModelConfig&) const = default;
};

/// Target offsets of each head: offset(1) = 1, offset(i) = k(i-1) + 1.
class LeapSchedule {
 public:
  LeapSchedule(int n_heads, int stride);
  static LeapSchedule from(const ModelConfig& config) {
    return {static_cast<int>(config.n_pred_heads), static_cast<int>(config.leap_stride)};
  }

  int n_heads() const { return n_heads_; }
  int stride() const { return stride_; }

  /// 1-based head index.
  int offset(int head) const;
  std::vector<int> offsets() const;

  /// Length of the consecutive draft recovered by looking backward: k(n-1)+1.
  int leap_horizon() const { return stride_ * (n_heads_ - 1) + 1; }

 private:
  int n_heads_;
  int stride_;
};

}  // namespace lmtp
