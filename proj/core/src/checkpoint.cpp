#include "lmtp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace lmtp {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
      (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  return true;
}

std::uint32_t require_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(in, v)) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

}  // namespace

void save_checkpoint(const ModelF& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  const auto& c = model.config();
  put_u32(out, kCheckpointVersion);
  for (std::uint32_t v : {c.vocab_size, c.d_model, c.n_layers, c.n_attn_heads, c.max_positions, c.n_pred_heads,
                          c.leap_stride})
    put_u32(out, v);
  model.weights().visit([&](const std::string& name, ParamGroup, const Matrix<float>& m) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (float f : m.flat()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  });
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

ModelF load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  const std::uint32_t version = require_u32(in, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  c.vocab_size = require_u32(in, "config");
  c.d_model = require_u32(in, "config");
  c.n_layers = require_u32(in, "config");
  c.n_attn_heads = require_u32(in, "config");
  c.max_positions = require_u32(in, "config");
  c.n_pred_heads = require_u32(in, "config");
  c.leap_stride = require_u32(in, "config");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid model config in checkpoint: ") + e.what());
  }

  ModelF model(c);
  std::map<std::string, Matrix<float>*> expected;
  model.weights().visit([&](const std::string& name, ParamGroup, Matrix<float>& m) { expected[name] = &m; });
  std::map<std::string, bool> seen;

  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    if (name_len > 4096) throw CheckpointError("tensor name too long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError("checkpoint truncated in tensor name");
    auto it = expected.find(name);
    if (it == expected.end()) throw CheckpointError("unexpected tensor '" + name + "'");
    if (seen[name]) throw CheckpointError("duplicate tensor '" + name + "'");
    seen[name] = true;
    const std::uint32_t rank = require_u32(in, "rank");
    if (rank != 2) throw CheckpointError("tensor '" + name + "' has rank " + std::to_string(rank) + ", expected 2");
    const std::uint32_t rows = require_u32(in, "dims");
    const std::uint32_t cols = require_u32(in, "dims");
    Matrix<float>& dst = *it->second;
    if (static_cast<int>(rows) != dst.rows() || static_cast<int>(cols) != dst.cols())
      throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", expected " + std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()));
    for (float& f : dst.flat()) f = std::bit_cast<float>(require_u32(in, "tensor data"));
  }
  for (const auto& [name, _] : expected)
    if (!seen[name]) throw CheckpointError("missing tensor '" + name + "'");
  return model;
}

}  // namespace lmtp
