#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lmtp {

/// Byte-level tokenizer with two reserved ids: a document start token and an
/// end token that doubles as the document separator when packing.
struct ByteTokenizer {
  static constexpr int kBos = 256;
  static constexpr int kEos = 257;
  static constexpr int kVocabSize = 258;

  static std::vector<int> encode(std::string_view text);
  /// Reserved ids are dropped.
  static std::string decode(std::span<const int> ids);
  /// BOS + bytes + EOS.
  static std::vector<int> encode_document(std::string_view text);
};

struct Corpus {
  std::vector<std::vector<int>> documents;

  std::size_t token_count() const;
  /// Throws std::out_of_range if any id is >= vocab_size.
  void validate(int vocab_size) const;
};

/// One document per non-empty line of UTF-8 text.
Corpus load_corpus(const std::filesystem::path& path);
Corpus corpus_from_lines(std::span<const std::string> lines);
/// Inverse of load_corpus; newlines inside documents are written as spaces.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct CorpusSplit {
  Corpus train;
  Corpus validation;
};

/// Every `round(1/val_fraction)`-th document goes to validation.
CorpusSplit split_corpus(const Corpus& corpus, double val_fraction);

/// A fixed-length training window. `segment[t]` identifies the document that
/// token t belongs to; supervision pairs never span two segments.
struct Window {
  std::vector<int> tokens;
  std::vector<int> segment;
};

/// Concatenates documents and cuts them into windows of `seq_len` tokens.
/// A trailing window shorter than `min_len` is dropped.
std::vector<Window> pack_windows(const Corpus& corpus, int seq_len, int min_len);

}  // namespace lmtp
