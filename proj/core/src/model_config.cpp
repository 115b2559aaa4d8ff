#include "lmtp/model_config.hpp"

#include <stdexcept>

namespace lmtp {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (d_model == 0 || n_attn_heads == 0) throw std::invalid_argument("d_model and n_attn_heads must be positive");
  if (d_model % n_attn_heads != 0) throw std::invalid_argument("d_model must be divisible by n_attn_heads");
  if (n_layers == 0) throw std::invalid_argument("n_layers must be >= 1");
  if (max_positions == 0) throw std::invalid_argument("max_positions must be >= 1");
  if (n_pred_heads < 1) throw std::invalid_argument("n_pred_heads must be >= 1");
  if (leap_stride < 1) throw std::invalid_argument("leap_stride must be >= 1");
}

LeapSchedule::LeapSchedule(int n_heads, int stride) : n_heads_(n_heads), stride_(stride) {
  if (n_heads < 1) throw std::invalid_argument("LeapSchedule: n must be >= 1");
  if (stride < 1) throw std::invalid_argument("LeapSchedule: k must be >= 1");
}

int LeapSchedule::offset(int head) const {
  if (head < 1 || head > n_heads_) throw std::out_of_range("LeapSchedule: head index out of range");
  return stride_ * (head - 1) + 1;
}

std::vector<int> LeapSchedule::offsets() const {
  std::vector<int> out;
  out.reserve(n_heads_);
  for (int i = 1; i <= n_heads_; ++i) out.push_back(offset(i));
  return out;
}

}  // namespace lmtp
