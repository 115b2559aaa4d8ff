#pragma once

#include <filesystem>
#include <stdexcept>

#include "lmtp/model.hpp"

namespace lmtp {

/// Binary checkpoint container, all integers and floats little-endian:
///
///   u32 format_version (= kCheckpointVersion)
///   u32 vocab_size, d_model, n_layers, n_attn_heads, max_positions,
///       n_pred_heads, leap_stride
///   repeated until end of file, one record per parameter tensor:
///     u32 name_length, name bytes (UTF-8)
///     u32 rank, u32 dims[rank]
///     f32 values[prod(dims)] in row-major order
///
/// Linear weights are stored input-major (in x out). Loading rejects unknown,
/// missing, duplicated or mis-shaped tensors.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const ModelF& model, const std::filesystem::path& path);
ModelF load_checkpoint(const std::filesystem::path& path);

}  // namespace lmtp
