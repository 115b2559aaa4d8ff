#include "lmtp/decode.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "lmtp/spectree.hpp"

namespace lmtp {

namespace {

int greedy_token(const ModelF& model, std::span<const float> hidden_row) {
  const std::vector<float> logits = model.logits_row(hidden_row, 1);
  return argmax<float>(logits);
}

void append_logits(DraftCandidates& draft, const std::vector<float>& logits, DraftTag tag) {
  draft.logits.append_row(logits);
  draft.tags.push_back(tag);
}

void commit_rows(const ForwardResult<float>& fwd, std::span<const int> rows, std::span<const int> tokens,
                 DecodeState& state) {
  state.cache.commit(fwd.pending, rows);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    state.push_hidden(fwd.hidden.row_span(rows[j]));
    state.tokens.push_back(tokens[j]);
  }
}

using Clock = std::chrono::steady_clock;

}  // namespace

std::span<const float> DecodeState::hidden_back(int lag) const {
  if (lag < 0 || lag >= recent_hidden.rows())
    throw std::out_of_range("decode state: hidden row " + std::to_string(lag) +
                            " steps back is not retained (prompt shorter than the leap stride?)");
  return recent_hidden.row_span(recent_hidden.rows() - 1 - lag);
}

void DecodeState::push_hidden(std::span<const float> row) {
  if (recent_hidden.rows() < history_capacity) {
    recent_hidden.append_row(row);
    return;
  }
  // Shift the window by one row.
  const int rows = recent_hidden.rows();
  const int cols = recent_hidden.cols();
  std::copy(recent_hidden.data() + cols, recent_hidden.data() + static_cast<std::size_t>(rows) * cols,
            recent_hidden.data());
  std::copy(row.begin(), row.end(), recent_hidden.row(rows - 1));
}

DecodeState prefill(const ModelF& model, std::span<const int> prompt, int history, int stop_token,
                    std::uint64_t seed) {
  if (prompt.empty()) throw std::invalid_argument("prefill: prompt must contain at least a start token");
  if (history < 1) throw std::invalid_argument("prefill: history must be >= 1");
  DecodeState state{.cache = KvCache<float>(model.config()),
                    .tokens = {},
                    .recent_hidden = {},
                    .history_capacity = history,
                    .prompt_length = static_cast<int>(prompt.size()),
                    .stop_token = stop_token,
                    .rng = std::mt19937_64(seed)};
  ForwardResult<float> fwd = model.forward_causal(prompt, state.cache);
  state.cache.commit_all(fwd.pending);
  state.tokens.assign(prompt.begin(), prompt.end());
  const int first = std::max(0, fwd.hidden.rows() - history);
  for (int r = first; r < fwd.hidden.rows(); ++r) state.push_hidden(fwd.hidden.row_span(r));
  return state;
}

// ---------------------------------------------------------------------------
// Drafts

std::vector<int> DraftCandidates::greedy() const {
  std::vector<int> out(size());
  for (int i = 0; i < size(); ++i) out[i] = argmax(logits.row_span(i));
  return out;
}

std::vector<std::vector<int>> DraftCandidates::top_tokens(int ranks) const {
  if (ranks < 1 || ranks > logits.cols()) throw std::out_of_range("top_tokens: rank count outside vocabulary");
  std::vector<std::vector<int>> out(size());
  std::vector<int> order(logits.cols());
  for (int i = 0; i < size(); ++i) {
    const float* row = logits.row(i);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + ranks, order.end(), [row](int a, int b) {
      return row[a] > row[b] || (row[a] == row[b] && a < b);
    });
    out[i].assign(order.begin(), order.begin() + ranks);
  }
  return out;
}

void DraftCandidates::truncate(int length) {
  if (length >= size()) return;
  logits.truncate_rows(length);
  tags.resize(length);
}

DraftTag lmtp_tag(int position, int stride) {
  if (position < 1 || stride < 1) throw std::out_of_range("lmtp_tag: position and stride must be >= 1");
  const int lag = (stride - (position - 1) % stride) % stride;
  const int offset = position + lag;
  return {.head = (offset - 1) / stride + 1, .step = -lag};
}

DraftCandidates draft_mtp(const ModelF& model, const DecodeState& state) {
  DraftCandidates draft;
  const auto z = state.hidden_back(0);
  const int n = static_cast<int>(model.config().n_pred_heads);
  for (int head = 1; head <= n; ++head) append_logits(draft, model.logits_row(z, head), {head, 0});
  return draft;
}

DraftCandidates draft_lmtp(const ModelF& model, const DecodeState& state) {
  const LeapSchedule schedule = LeapSchedule::from(model.config());
  DraftCandidates draft;
  for (int i = 1; i <= schedule.leap_horizon(); ++i) {
    const DraftTag tag = lmtp_tag(i, schedule.stride());
    append_logits(draft, model.logits_row(state.hidden_back(-tag.step), tag.head), tag);
  }
  return draft;
}

DraftCandidates draft_fmtp(const ModelF& model, DecodeState& state) {
  const LeapSchedule schedule = LeapSchedule::from(model.config());
  const int k = schedule.stride();
  const int t = state.length();
  const int max_pos = static_cast<int>(model.config().max_positions);

  // ahead[s] = z_{t+s}; ahead[0] is the committed row.
  Matrix<float> ahead;
  ahead.append_row(state.hidden_back(0));
  DraftCandidates draft;
  int token = greedy_token(model, ahead.row_span(0));
  for (int s = 1; s < k && t + s - 1 < max_pos; ++s) {
    const int tok[] = {token};
    ForwardResult<float> fwd = model.forward_causal(tok, state.cache);
    state.cache.commit_all(fwd.pending);
    ++draft.extra_forward_passes;
    ahead.append_row(fwd.hidden.row_span(0));
    token = greedy_token(model, fwd.hidden.row_span(0));
  }
  state.cache.truncate(t);

  for (int i = 1; i <= k * schedule.n_heads(); ++i) {
    const int s = (i - 1) % k;
    if (s >= ahead.rows()) break;
    const int head = (i - s - 1) / k + 1;
    append_logits(draft, model.logits_row(ahead.row_span(s), head), {head, s});
  }
  return draft;
}

// ---------------------------------------------------------------------------
// Verification

AcceptResult verify_accept(const ModelF& model, std::span<const int> drafted, DecodeState& state) {
  if (drafted.empty()) throw std::invalid_argument("verify_accept: empty draft");
  AcceptResult out;
  const int first = greedy_token(model, state.hidden_back(0));
  if (drafted[0] != first) {
    const int tok[] = {first};
    ForwardResult<float> fwd = model.forward_causal(tok, state.cache);
    const int rows[] = {0};
    commit_rows(fwd, rows, tok, state);
    out.tokens = {first};
    out.forward_passes = 1;
    return out;
  }
  ForwardResult<float> fwd = model.forward_causal(drafted, state.cache);
  out.forward_passes = 1;
  const int length = static_cast<int>(drafted.size());
  int accepted = 1;
  while (accepted < length && drafted[accepted - 1] != state.stop_token &&
         greedy_token(model, fwd.hidden.row_span(accepted - 1)) == drafted[accepted])
    ++accepted;
  std::vector<int> rows(accepted);
  std::iota(rows.begin(), rows.end(), 0);
  commit_rows(fwd, rows, drafted.subspan(0, accepted), state);
  out.tokens.assign(drafted.begin(), drafted.begin() + accepted);
  return out;
}

// ---------------------------------------------------------------------------
// Strategies and the loop

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kAr:
      return "ar";
    case Strategy::kMtp:
      return "mtp";
    case Strategy::kFmtp:
      return "fmtp";
    case Strategy::kLmtp:
      return "lmtp";
    case Strategy::kLmtpTree:
      return "lmtp+tree";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  for (Strategy s : all_strategies())
    if (to_string(s) == text) return s;
  if (text == "lmtp_tree" || text == "tree") return Strategy::kLmtpTree;
  throw std::invalid_argument("unknown decoding strategy: " + text);
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> kAll = {Strategy::kAr, Strategy::kMtp, Strategy::kFmtp, Strategy::kLmtp,
                                             Strategy::kLmtpTree};
  return kAll;
}

double DecodeStats::mean_accept() const {
  return verification_passes == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(verification_passes);
}

double DecodeStats::tokens_per_sec() const { return seconds > 0.0 ? static_cast<double>(tokens) / seconds : 0.0; }

void DecodeStats::record_round(int accepted) {
  if (static_cast<int>(accept_histogram.size()) <= accepted) accept_histogram.resize(accepted + 1, 0);
  ++accept_histogram[accepted];
  tokens += accepted;
  ++verification_passes;
}

void DecodeStats::merge(const DecodeStats& other) {
  tokens += other.tokens;
  verification_passes += other.verification_passes;
  forward_passes += other.forward_passes;
  seconds += other.seconds;
  if (accept_histogram.size() < other.accept_histogram.size()) accept_histogram.resize(other.accept_histogram.size(), 0);
  for (std::size_t i = 0; i < other.accept_histogram.size(); ++i) accept_histogram[i] += other.accept_histogram[i];
}

namespace {

DecodeResult ar_decode_into(const ModelF& model, std::span<const int> prompt, int max_new, int stop_token,
                            DecodeState& state) {
  if (max_new < 0) throw std::invalid_argument("ar_decode: max_new must be >= 0");
  const auto start = Clock::now();
  state = prefill(model, prompt, 1, stop_token);
  const int max_pos = static_cast<int>(model.config().max_positions);
  DecodeResult out;
  while (static_cast<int>(out.tokens.size()) < max_new && state.length() < max_pos) {
    const int next = greedy_token(model, state.hidden_back(0));
    out.tokens.push_back(next);
    out.stats.record_round(1);
    if (next == stop_token || static_cast<int>(out.tokens.size()) == max_new || state.length() + 1 == max_pos) break;
    const int tok[] = {next};
    ForwardResult<float> fwd = model.forward_causal(tok, state.cache);
    ++out.stats.forward_passes;
    const int rows[] = {0};
    commit_rows(fwd, rows, tok, state);
  }
  out.stats.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

}  // namespace

DecodeResult ar_decode(const ModelF& model, std::span<const int> prompt, int max_new, int stop_token) {
  DecodeState state;
  return ar_decode_into(model, prompt, max_new, stop_token, state);
}

DecodeResult decode_loop(const ModelF& model, std::span<const int> prompt, const DecodeOptions& options) {
  DecodeState state;
  return decode_loop(model, prompt, options, state);
}

DecodeResult decode_loop(const ModelF& model, std::span<const int> prompt, const DecodeOptions& options,
                         DecodeState& state) {
  if (options.max_new < 0) throw std::invalid_argument("decode_loop: max_new must be >= 0");
  if (options.strategy == Strategy::kAr) return ar_decode_into(model, prompt, options.max_new, options.stop_token, state);
  if (options.strategy == Strategy::kLmtpTree && options.tree == nullptr)
    throw std::invalid_argument("decode_loop: tree strategy needs a token tree");

  const auto start = Clock::now();
  const bool leap = options.strategy == Strategy::kLmtp || options.strategy == Strategy::kLmtpTree;
  const int history = leap ? static_cast<int>(model.config().leap_stride) : 1;
  state = prefill(model, prompt, history, options.stop_token);
  if (leap && state.recent_hidden.rows() < history)
    throw std::invalid_argument("decode_loop: leap decoding needs a prompt of at least " + std::to_string(history) +
                                " tokens");
  const int max_pos = static_cast<int>(model.config().max_positions);
  DecodeResult out;
  while (static_cast<int>(out.tokens.size()) < options.max_new && state.length() < max_pos) {
    const int room = std::min(options.max_new - static_cast<int>(out.tokens.size()), max_pos - state.length());
    DraftCandidates draft;
    switch (options.strategy) {
      case Strategy::kMtp:
        draft = draft_mtp(model, state);
        break;
      case Strategy::kFmtp:
        draft = draft_fmtp(model, state);
        break;
      default:
        draft = draft_lmtp(model, state);
        break;
    }
    out.stats.forward_passes += draft.extra_forward_passes;
    draft.truncate(room);

    std::vector<int> emitted;
    if (options.strategy == Strategy::kLmtpTree) {
      const TokenTree tree = options.tree->truncated(std::min(room, draft.size()));
      int ranks = 1;
      for (const auto& node : tree.nodes()) ranks = std::max(ranks, node.rank);
      const std::vector<int> node_tokens = populate_tree(tree, draft.top_tokens(ranks));
      TreeAcceptResult res = verify_tree(model, tree, node_tokens, state);
      out.stats.forward_passes += res.forward_passes;
      emitted = std::move(res.tokens);
    } else {
      const std::vector<int> drafted = draft.greedy();
      AcceptResult res = verify_accept(model, drafted, state);
      out.stats.forward_passes += res.forward_passes;
      emitted = std::move(res.tokens);
    }
    out.stats.record_round(static_cast<int>(emitted.size()));
    out.tokens.insert(out.tokens.end(), emitted.begin(), emitted.end());
    if (emitted.back() == options.stop_token) break;
  }
  out.stats.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

void write_stats_csv(const std::vector<StatsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write stats: " + path);
  out << "strategy,prompt_id,tokens,passes,mean_accept,tokens_per_sec,speedup\n";
  for (const auto& row : rows)
    out << row.strategy << ',' << row.prompt_id << ',' << row.stats.tokens << ',' << row.stats.verification_passes
        << ',' << row.stats.mean_accept() << ',' << row.stats.tokens_per_sec() << ',' << row.stats.speedup << '\n';
}

}  // namespace lmtp
