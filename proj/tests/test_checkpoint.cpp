#include <gtest/gtest.h>

#include <fstream>

#include "lmtp/checkpoint.hpp"
#include "test_util.hpp"

namespace lmtp {
namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST(CheckpointTest, RoundTripIsExact) {
  const auto dir = testing::temp_dir("ckpt_roundtrip");
  const ModelF model = testing::scrambled_model(testing::tiny_config(32, 2, 4, 2), 41);
  save_checkpoint(model, dir / "m.ckpt");
  const ModelF loaded = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(loaded.config().leap_stride, 2);
  EXPECT_EQ(loaded.config().n_pred_heads, 4);
  EXPECT_EQ(loaded, model);
  // Saving again reproduces the same bytes.
  save_checkpoint(loaded, dir / "m2.ckpt");
  EXPECT_EQ(read_bytes(dir / "m.ckpt"), read_bytes(dir / "m2.ckpt"));
}

TEST(CheckpointTest, RejectsMissingAndCorruptFiles) {
  const auto dir = testing::temp_dir("ckpt_errors");
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), CheckpointError);

  save_checkpoint(ModelF::random(testing::tiny_config(), 42), dir / "m.ckpt");
  auto bytes = read_bytes(dir / "m.ckpt");

  auto truncated = bytes;
  truncated.resize(bytes.size() - 7);
  write_bytes(dir / "t.ckpt", truncated);
  EXPECT_THROW(load_checkpoint(dir / "t.ckpt"), CheckpointError);

  auto wrong_version = bytes;
  wrong_version[0] = 9;
  write_bytes(dir / "v.ckpt", wrong_version);
  EXPECT_THROW(load_checkpoint(dir / "v.ckpt"), CheckpointError);

  auto bad_config = bytes;
  bad_config[8] = 31;  // d_model no longer divisible by the attention heads
  write_bytes(dir / "c.ckpt", bad_config);
  EXPECT_THROW(load_checkpoint(dir / "c.ckpt"), CheckpointError);

  auto renamed = bytes;
  renamed[36] = 'X';  // first byte of the first tensor name
  write_bytes(dir / "n.ckpt", renamed);
  EXPECT_THROW(load_checkpoint(dir / "n.ckpt"), CheckpointError);
}

TEST(CheckpointTest, HeaderLayout) {
  const auto dir = testing::temp_dir("ckpt_header");
  save_checkpoint(ModelF::random(testing::tiny_config(), 43), dir / "m.ckpt");
  const auto bytes = read_bytes(dir / "m.ckpt");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    return v;
  };
  EXPECT_EQ(u32(0), kCheckpointVersion);
  EXPECT_EQ(u32(4), 258u);
  EXPECT_EQ(u32(8), 32u);
  EXPECT_EQ(u32(28), 2u);  // leap stride
  EXPECT_EQ(std::string(bytes.begin() + 36, bytes.begin() + 36 + u32(32)), "tok_emb");
}

}  // namespace
}  // namespace lmtp
