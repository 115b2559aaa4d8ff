#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmtp/model.hpp"

namespace lmtp {

class TokenTree;

/// Committed decoding state. `tokens` and the KV cache always describe the
/// same sequence; `recent_hidden` holds the final hidden rows of its last
/// positions (oldest first), so row back() is z_t and the rows before it are
/// the cached past hidden states the leap draft looks back to.
struct DecodeState {
  KvCache<float> cache;
  std::vector<int> tokens;
  Matrix<float> recent_hidden;
  int history_capacity = 1;
  int prompt_length = 0;
  int stop_token = -1;  // emission ends after this token; -1 disables
  std::mt19937_64 rng;

  int length() const { return cache.length(); }
  int emitted() const { return length() - prompt_length; }
  /// Final hidden row at position t - lag. Throws if not retained.
  std::span<const float> hidden_back(int lag) const;
  void push_hidden(std::span<const float> row);
};

/// Runs the prompt through the model and commits it. The state keeps the
/// last `history` hidden rows (the leap stride for L-MTP).
DecodeState prefill(const ModelF& model, std::span<const int> prompt, int history, int stop_token = -1,
                    std::uint64_t seed = 0);

/// Where a draft position's distribution came from: `head` applied to the
/// hidden row at step t + step (step = 0 current, -1 cached previous, +1 one
/// speculative step ahead).
struct DraftTag {
  int head = 1;
  int step = 0;
  bool operator==(const DraftTag&) const = default;
};

/// Consecutive per-position candidate distributions for offsets 1..size().
/// Position 1 always comes from the base head at step t, so its argmax is the
/// token plain greedy decoding would emit next.
struct DraftCandidates {
  Matrix<float> logits;
  std::vector<DraftTag> tags;
  int extra_forward_passes = 0;

  int size() const { return static_cast<int>(tags.size()); }
  std::vector<int> greedy() const;
  /// Top-`ranks` token ids per position, best first (ties to the lower id).
  std::vector<std::vector<int>> top_tokens(int ranks) const;
  void truncate(int length);
};

/// Heads 1..n applied to z_t for contiguous offsets 1..n.
DraftCandidates draft_mtp(const ModelF& model, const DecodeState& state);

/// Backward-looking leap draft of length k(n-1)+1: position i is filled by
/// the head whose offset is i + lag, applied to the hidden row lag steps back,
/// with lag = (k - (i-1) mod k) mod k. No backbone pass is run.
DraftCandidates draft_lmtp(const ModelF& model, const DecodeState& state);

/// Forward-filling leap draft of length k*n: position i uses the head with
/// offset i - s applied to z_{t+s}, s = (i-1) mod k. The k-1 hidden rows
/// ahead of t come from speculative single-token passes on the greedy tokens;
/// the state is restored afterwards.
DraftCandidates draft_fmtp(const ModelF& model, DecodeState& state);

/// Leap draft tags for position i (1-based) of an (n, k) schedule.
DraftTag lmtp_tag(int position, int stride);

struct AcceptResult {
  std::vector<int> tokens;  // emitted this round, >= 1
  int forward_passes = 0;
};

/// Scores `drafted` (offsets 1..L) in one pass and keeps the longest prefix
/// that greedy decoding would have produced, stopping after the state's stop
/// token. Accepted K/V rows and hidden rows are committed. A wrong first token
/// is replaced by the base head's choice, which costs one extra pass.
AcceptResult verify_accept(const ModelF& model, std::span<const int> drafted, DecodeState& state);

enum class Strategy { kAr, kMtp, kFmtp, kLmtp, kLmtpTree };

std::string to_string(Strategy strategy);
Strategy parse_strategy(const std::string& text);
const std::vector<Strategy>& all_strategies();

struct DecodeStats {
  long tokens = 0;
  long verification_passes = 0;
  long forward_passes = 0;           // backbone calls after the prompt, speculative ones included
  std::vector<long> accept_histogram;  // index = tokens emitted in one round
  double seconds = 0.0;
  double speedup = 0.0;              // filled by the caller relative to an AR run

  double mean_accept() const;
  double tokens_per_sec() const;
  void record_round(int accepted);
  void merge(const DecodeStats& other);
};

struct DecodeResult {
  std::vector<int> tokens;  // continuation only
  DecodeStats stats;
};

struct DecodeOptions {
  Strategy strategy = Strategy::kLmtp;
  int max_new = 64;
  int stop_token = -1;
  const TokenTree* tree = nullptr;  // required by kLmtpTree
};

/// Plain greedy decoding from the base head, one token per pass.
DecodeResult ar_decode(const ModelF& model, std::span<const int> prompt, int max_new, int stop_token = -1);

/// Draft -> verify -> accept until max_new tokens, the stop token, or the
/// position limit. Output is identical to ar_decode for every strategy.
DecodeResult decode_loop(const ModelF& model, std::span<const int> prompt, const DecodeOptions& options);

/// Same as decode_loop but also hands back the final state (for inspection).
DecodeResult decode_loop(const ModelF& model, std::span<const int> prompt, const DecodeOptions& options,
                         DecodeState& final_state);

struct StatsRow {
  std::string strategy;
  int prompt_id = 0;
  DecodeStats stats;
};

/// strategy,prompt_id,tokens,passes,mean_accept,tokens_per_sec,speedup
void write_stats_csv(const std::vector<StatsRow>& rows, const std::string& path);

}  // namespace lmtp
