#include "lmtp/spectree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lmtp {

void HeadAccuracyProfile::validate() const {
  if (acc.empty() || acc.front().empty()) throw std::invalid_argument("accuracy profile is empty");
  for (const auto& layer : acc) {
    if (layer.size() != acc.front().size()) throw std::invalid_argument("accuracy profile: ragged rank rows");
    for (std::size_t r = 0; r < layer.size(); ++r) {
      if (!(layer[r] >= 0.0 && layer[r] <= 1.0)) throw std::invalid_argument("accuracy profile: entry outside [0,1]");
      if (r > 0 && layer[r] > layer[r - 1]) throw std::invalid_argument("accuracy profile: increasing in rank");
    }
  }
}

// ---------------------------------------------------------------------------
// Tree

TokenTree::TokenTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)), ancestors_(nodes_.size()) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& node = nodes_[i];
    if (node.id != static_cast<int>(i)) throw std::invalid_argument("token tree: node ids must equal their index");
    if (node.layer < 1 || node.rank < 1) throw std::invalid_argument("token tree: layer and rank are 1-based");
    if (node.parent < 0) {
      if (node.layer != 1) throw std::invalid_argument("token tree: parentless node outside the first layer");
      continue;
    }
    if (node.parent >= node.id) throw std::invalid_argument("token tree: parent must precede child");
    if (nodes_[node.parent].layer != node.layer - 1)
      throw std::invalid_argument("token tree: child must sit one layer below its parent");
    ancestors_[i] = ancestors_[node.parent];
    ancestors_[i].push_back(node.parent);
  }
}

int TokenTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.layer);
  return d;
}

std::vector<int> TokenTree::children(int id) const {
  std::vector<int> out;
  for (const auto& n : nodes_)
    if (n.parent == id) out.push_back(n.id);
  return out;
}

std::vector<std::vector<int>> TokenTree::paths() const {
  std::vector<bool> has_child(nodes_.size(), false);
  for (const auto& n : nodes_)
    if (n.parent >= 0) has_child[n.parent] = true;
  std::vector<std::vector<int>> out;
  for (const auto& n : nodes_) {
    if (has_child[n.id]) continue;
    std::vector<int> path = ancestors_[n.id];
    path.push_back(n.id);
    out.push_back(std::move(path));
  }
  return out;
}

TokenTree TokenTree::truncated(int depth) const {
  std::vector<int> remap(nodes_.size(), -1);
  std::vector<TreeNode> kept;
  for (const auto& n : nodes_) {
    if (n.layer > depth) continue;
    TreeNode copy = n;
    copy.id = static_cast<int>(kept.size());
    copy.parent = n.parent < 0 ? -1 : remap[n.parent];
    remap[n.id] = copy.id;
    kept.push_back(copy);
  }
  return TokenTree(std::move(kept));
}

TokenTree build_tree(const HeadAccuracyProfile& profile, int budget, int max_children, int max_depth) {
  profile.validate();
  if (budget < 1 || max_children < 1 || max_depth < 1)
    throw std::invalid_argument("build_tree: budget, max_children and max_depth must be >= 1");
  const int depth = std::min(max_depth, profile.layers());
  const int ranks = std::min(max_children, profile.ranks());

  struct Candidate {
    int layer, rank, parent;
    double expectation;
  };
  std::vector<TreeNode> added;  // in insertion order
  std::vector<Candidate> frontier{{1, 1, -1, profile.acc[0][0]}};
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.expectation != b.expectation) return a.expectation > b.expectation;
    return std::tie(a.layer, a.rank, a.parent) < std::tie(b.layer, b.rank, b.parent);
  };
  while (static_cast<int>(added.size()) < budget && !frontier.empty()) {
    auto best = std::min_element(frontier.begin(), frontier.end(), better);
    const Candidate c = *best;
    frontier.erase(best);
    const int id = static_cast<int>(added.size());
    added.push_back({.id = id, .parent = c.parent, .layer = c.layer, .rank = c.rank, .expectation = c.expectation});
    const double parent_exp = c.parent < 0 ? 1.0 : added[c.parent].expectation;
    if (c.rank < ranks)
      frontier.push_back({c.layer, c.rank + 1, c.parent, parent_exp * profile.acc[c.layer - 1][c.rank]});
    if (c.layer < depth) frontier.push_back({c.layer + 1, 1, id, c.expectation * profile.acc[c.layer][0]});
  }

  // Renumber breadth-first: by layer, then parent's new id, then rank.
  std::vector<int> order(added.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> new_id(added.size(), -1);
  std::vector<TreeNode> nodes;
  for (int layer = 1; layer <= depth; ++layer) {
    std::vector<int> in_layer;
    for (int i : order)
      if (added[i].layer == layer) in_layer.push_back(i);
    std::sort(in_layer.begin(), in_layer.end(), [&](int a, int b) {
      const int pa = added[a].parent < 0 ? -1 : new_id[added[a].parent];
      const int pb = added[b].parent < 0 ? -1 : new_id[added[b].parent];
      return std::tie(pa, added[a].rank) < std::tie(pb, added[b].rank);
    });
    for (int i : in_layer) {
      TreeNode node = added[i];
      new_id[i] = static_cast<int>(nodes.size());
      node.id = new_id[i];
      node.parent = node.parent < 0 ? -1 : new_id[node.parent];
      nodes.push_back(node);
    }
  }
  return TokenTree(std::move(nodes));
}

TreeAttention tree_mask(const TokenTree& tree, int prefix_len) {
  const int n = tree.size();
  TreeAttention out{AttentionMask(n, prefix_len + n), std::vector<int>(n)};
  for (int q = 0; q < n; ++q) {
    for (int j = 0; j < prefix_len; ++j) out.mask.set(q, j, true);
    for (int a : tree.ancestors(q)) out.mask.set(q, prefix_len + a, true);
    out.mask.set(q, prefix_len + q, true);
    out.positions[q] = prefix_len + tree.nodes()[q].layer - 1;
  }
  return out;
}

std::vector<int> populate_tree(const TokenTree& tree, const std::vector<std::vector<int>>& top_tokens) {
  std::vector<int> tokens(tree.size(), -1);
  std::map<int, std::vector<int>> seen_under;  // parent id -> tokens already used by siblings
  for (const auto& node : tree.nodes()) {
    if (node.layer > static_cast<int>(top_tokens.size()))
      throw std::out_of_range("populate_tree: tree deeper than the draft");
    const auto& ranked = top_tokens[node.layer - 1];
    if (node.rank > static_cast<int>(ranked.size())) throw std::out_of_range("populate_tree: rank exceeds top-R");
    const int token = ranked[node.rank - 1];
    auto& used = seen_under[node.parent];
    if (std::find(used.begin(), used.end(), token) != used.end()) continue;
    used.push_back(token);
    tokens[node.id] = token;
  }
  return tokens;
}

TreeAcceptResult verify_tree(const ModelF& model, const TokenTree& tree, std::span<const int> node_tokens,
                             DecodeState& state) {
  if (static_cast<int>(node_tokens.size()) != tree.size())
    throw std::invalid_argument("verify_tree: one token per node required");
  if (tree.size() == 0) throw std::invalid_argument("verify_tree: empty tree");
  TreeAcceptResult out;
  const TreeAttention att = tree_mask(tree, state.length());
  std::vector<int> tokens(node_tokens.begin(), node_tokens.end());
  for (int& t : tokens)
    if (t < 0) t = 0;  // placeholder for deduplicated nodes; never accepted
  ForwardResult<float> fwd = model.forward(tokens, att.positions, att.mask, state.cache);
  out.forward_passes = 1;

  std::vector<std::vector<int>> kids(tree.size() + 1);  // index 0 is the virtual root
  for (const auto& n : tree.nodes()) kids[n.parent + 1].push_back(n.id);

  auto greedy = [&](std::span<const float> row) { return argmax<float>(model.logits_row(row, 1)); };
  int target = greedy(state.hidden_back(0));
  int current = -1;
  while (true) {
    if (current >= 0 && node_tokens[current] == state.stop_token) break;
    int next = -1;
    for (int c : kids[current + 1])
      if (node_tokens[c] >= 0 && node_tokens[c] == target) next = c;
    if (next < 0) break;
    out.path.push_back(next);
    out.tokens.push_back(node_tokens[next]);
    current = next;
    target = greedy(fwd.hidden.row_span(next));
  }

  if (out.path.empty()) {
    // First layer missed: emit the base head's token and commit it alone.
    const int tok[] = {target};
    ForwardResult<float> single = model.forward_causal(tok, state.cache);
    ++out.forward_passes;
    state.cache.commit_all(single.pending);
    state.push_hidden(single.hidden.row_span(0));
    state.tokens.push_back(target);
    out.tokens = {target};
    return out;
  }
  // Row invariance makes the tree rows identical to a sequential pass over
  // the accepted path, so they can be gathered directly.
  state.cache.commit(fwd.pending, out.path);
  for (std::size_t j = 0; j < out.path.size(); ++j) {
    state.push_hidden(fwd.hidden.row_span(out.path[j]));
    state.tokens.push_back(out.tokens[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Profiling

namespace {

struct RankCounts {
  std::vector<long> hits;  // hits[r] = true token ranked r+1
  long total = 0;
};

/// 1-based rank of `target` (strictly greater logits, or equal with lower id, rank ahead).
int token_rank(const float* row, int vocab, int target) {
  const float v = row[target];
  int rank = 1;
  for (int c = 0; c < vocab; ++c)
    if (row[c] > v || (row[c] == v && c < target)) ++rank;
  return rank;
}

std::vector<double> top1_curve(const std::vector<RankCounts>& per_head, const LeapSchedule& schedule) {
  std::vector<double> out;
  for (int i = 1; i <= schedule.leap_horizon(); ++i) {
    const auto& c = per_head[lmtp_tag(i, schedule.stride()).head - 1];
    out.push_back(c.total == 0 ? 0.0 : static_cast<double>(c.hits[0]) / static_cast<double>(c.total));
  }
  return out;
}

}  // namespace

ProfileReport estimate_profile(const ModelF& model, std::span<const Window> windows, const LeapSchedule& schedule,
                               int top_ranks) {
  const int vocab = static_cast<int>(model.config().vocab_size);
  if (top_ranks < 1 || top_ranks > vocab) throw std::invalid_argument("estimate_profile: top_ranks outside vocabulary");
  if (schedule.n_heads() != static_cast<int>(model.config().n_pred_heads))
    throw std::invalid_argument("estimate_profile: schedule head count differs from model");
  const int n = schedule.n_heads();
  // Position i's draft tag fixes (head, look-back); every hidden row j scored
  // by head h predicts token j + offset(h). Counts are therefore kept per head.
  std::vector<RankCounts> all(n), half[2] = {std::vector<RankCounts>(n), std::vector<RankCounts>(n)};
  for (auto* set : {&all, &half[0], &half[1]})
    for (auto& c : *set) c.hits.assign(top_ranks, 0);

  const KvCache<float> empty(model.config());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const Window& win = windows[w];
    const Matrix<float> hidden = model.forward_causal(win.tokens, empty).hidden;
    for (int h = 1; h <= n; ++h) {
      const LeapAlignment pairs = align_leap_targets(win.tokens, h, schedule, win.segment);
      if (pairs.size() == 0) continue;
      const Matrix<float> logits = model.logits(hidden, h);
      for (int j = 0; j < pairs.size(); ++j) {
        const int rank = token_rank(logits.row(pairs.positions[j]), vocab, pairs.targets[j]);
        for (auto* c : {&all[h - 1], &half[w % 2][h - 1]}) {
          ++c->total;
          if (rank <= top_ranks) ++c->hits[rank - 1];
        }
      }
    }
  }
  if (all[0].total < kMinProfilePositions)
    throw InsufficientDataError("estimate_profile: only " + std::to_string(all[0].total) + " scored positions (need " +
                                std::to_string(kMinProfilePositions) + ")");

  ProfileReport report;
  report.scored_positions = all[0].total;
  for (int i = 1; i <= schedule.leap_horizon(); ++i) {
    const auto& c = all[lmtp_tag(i, schedule.stride()).head - 1];
    std::vector<double> row(top_ranks);
    double cumulative = 0.0;
    double running_min = 1.0;
    for (int r = 0; r < top_ranks; ++r) {
      const double freq = c.total == 0 ? 0.0 : static_cast<double>(c.hits[r]) / static_cast<double>(c.total);
      cumulative += freq;
      running_min = std::min(running_min, freq);
      row[r] = running_min;
    }
    report.profile.acc.push_back(row);
    report.top_r.push_back(cumulative);
  }
  report.top1 = top1_curve(all, schedule);
  report.half_a_top1 = top1_curve(half[0], schedule);
  report.half_b_top1 = top1_curve(half[1], schedule);
  for (std::size_t i = 0; i < report.top1.size(); ++i) {
    report.max_half_difference =
        std::max(report.max_half_difference, std::abs(report.half_a_top1[i] - report.half_b_top1[i]));
    if (i > 0)
      report.max_monotonicity_violation =
          std::max(report.max_monotonicity_violation, report.top1[i] - report.top1[i - 1]);
  }
  report.gamma_hat = fit_gamma(report.top1, schedule.stride());
  return report;
}

double fit_gamma(std::span<const double> top1, int stride) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < top1.size(); ++i) {
    if (!(top1[i] > 0.0)) continue;
    const DraftTag tag = lmtp_tag(static_cast<int>(i) + 1, stride);
    xs.push_back(static_cast<double>(i) - tag.step);  // offset - 1 = (i+1) + lag - 1
    ys.push_back(std::log(top1[i]));
  }
  if (xs.size() < 2) return 0.0;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  return sxx == 0.0 ? 0.0 : -sxy / sxx;
}

HeadAccuracyProfile decoding_profile(const HeadAccuracyProfile& profile) {
  HeadAccuracyProfile out = profile;
  if (!out.acc.empty()) {
    std::fill(out.acc[0].begin(), out.acc[0].end(), 0.0);
    out.acc[0][0] = 1.0;
  }
  return out;
}

void write_profile_csv(const HeadAccuracyProfile& profile, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write profile: " + path);
  out.precision(17);
  out << "position,rank,accuracy\n";
  for (int i = 0; i < profile.layers(); ++i)
    for (int r = 0; r < profile.ranks(); ++r) out << i + 1 << ',' << r + 1 << ',' << profile.acc[i][r] << '\n';
}

HeadAccuracyProfile read_profile_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "position,rank,accuracy") throw std::runtime_error("profile: unexpected header in " + path);
  HeadAccuracyProfile profile;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    int position = 0, rank = 0;
    double acc = 0.0;
    char c1 = 0, c2 = 0;
    if (!(fields >> position >> c1 >> rank >> c2 >> acc) || c1 != ',' || c2 != ',' || position < 1 || rank < 1)
      throw std::runtime_error("profile: malformed line '" + line + "'");
    if (static_cast<int>(profile.acc.size()) < position) profile.acc.resize(position);
    auto& row = profile.acc[position - 1];
    if (static_cast<int>(row.size()) != rank - 1) throw std::runtime_error("profile: ranks out of order");
    row.push_back(acc);
  }
  profile.validate();
  return profile;
}

void write_tree(const TokenTree& tree, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write tree: " + path);
  for (const auto& n : tree.nodes()) out << n.id << ' ' << n.parent << ' ' << n.layer << ' ' << n.rank << '\n';
}

}  // namespace lmtp
