#include "lmtp/corpus.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace lmtp {

std::vector<int> ByteTokenizer::encode(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

std::string ByteTokenizer::decode(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids)
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  return out;
}

std::vector<int> ByteTokenizer::encode_document(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(kBos);
  for (unsigned char c : text) ids.push_back(c);
  ids.push_back(kEos);
  return ids;
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.size();
  return n;
}

void Corpus::validate(int vocab_size) const {
  for (const auto& d : documents)
    for (int id : d)
      if (id < 0 || id >= vocab_size) throw std::out_of_range("corpus token id outside vocabulary");
}

Corpus corpus_from_lines(std::span<const std::string> lines) {
  Corpus corpus;
  for (const auto& line : lines) {
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty()) continue;
    corpus.documents.push_back(ByteTokenizer::encode_document(view));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  return corpus_from_lines(lines);
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus: " + path.string());
  for (const auto& doc : corpus.documents) {
    std::string text = ByteTokenizer::decode(doc);
    for (char& c : text)
      if (c == '\n' || c == '\r') c = ' ';
    out << text << '\n';
  }
}

CorpusSplit split_corpus(const Corpus& corpus, double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val_fraction must be in (0, 1)");
  const auto every = static_cast<std::size_t>(std::max(2.0, std::round(1.0 / val_fraction)));
  CorpusSplit split;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i)
    (i % every == every - 1 ? split.validation : split.train).documents.push_back(corpus.documents[i]);
  return split;
}

std::vector<Window> pack_windows(const Corpus& corpus, int seq_len, int min_len) {
  if (seq_len < 2) throw std::invalid_argument("pack_windows: seq_len must be >= 2");
  std::vector<Window> windows;
  Window current;
  for (std::size_t doc = 0; doc < corpus.documents.size(); ++doc) {
    for (int id : corpus.documents[doc]) {
      current.tokens.push_back(id);
      current.segment.push_back(static_cast<int>(doc));
      if (static_cast<int>(current.tokens.size()) == seq_len) {
        windows.push_back(std::move(current));
        current = Window{};
      }
    }
  }
  if (static_cast<int>(current.tokens.size()) >= min_len && !current.tokens.empty()) windows.push_back(std::move(current));
  return windows;
}

}  // namespace lmtp
