#pragma once

#include <span>
#include <string>
#include <vector>

#include "lmtp/corpus.hpp"
#include "lmtp/decode.hpp"
#include "lmtp/model.hpp"
#include "lmtp/training.hpp"

namespace lmtp {

/// acc[i][r]: probability that the rank-(r+1) candidate at draft position
/// i+1 is the right token. Non-increasing in r, entries in [0, 1].
struct HeadAccuracyProfile {
  std::vector<std::vector<double>> acc;

  int layers() const { return static_cast<int>(acc.size()); }
  int ranks() const { return acc.empty() ? 0 : static_cast<int>(acc.front().size()); }
  void validate() const;
};

struct TreeNode {
  int id = 0;
  int parent = -1;  // -1 for first-layer nodes
  int layer = 1;    // 1-based draft position
  int rank = 1;     // 1-based candidate rank
  double expectation = 0.0;  // product of acc along the root path
};

/// Static candidate tree. Nodes are stored breadth-first, so a parent always
/// precedes its children and node ids equal their index.
class TokenTree {
 public:
  TokenTree() = default;
  explicit TokenTree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int depth() const;
  /// Ancestors of `id` from the first layer down, excluding the node itself.
  const std::vector<int>& ancestors(int id) const { return ancestors_[id]; }
  std::vector<int> children(int id) const;  // id = -1 gives the first layer
  /// Root-to-leaf node id lists.
  std::vector<std::vector<int>> paths() const;
  /// Nodes with layer <= depth, renumbered.
  TokenTree truncated(int depth) const;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::vector<int>> ancestors_;
};

/// Greedy best-first expansion. Starting from the rank-1 first-layer node,
/// repeatedly adds the candidate with the highest path expectation, where a
/// node's candidates are its next sibling rank and its rank-1 child. Ties go
/// to the smallest (layer, rank, parent id).
TokenTree build_tree(const HeadAccuracyProfile& profile, int budget, int max_children, int max_depth);

struct TreeAttention {
  AttentionMask mask;
  std::vector<int> positions;
};

/// Each node sees the committed prefix, its ancestors and itself. Node
/// positions are prefix_len + layer - 1.
TreeAttention tree_mask(const TokenTree& tree, int prefix_len);

/// Token per node: the rank-r candidate of draft position `layer`. A node
/// whose token repeats a better-ranked sibling's gets -1 and is skipped.
std::vector<int> populate_tree(const TokenTree& tree, const std::vector<std::vector<int>>& top_tokens);

struct TreeAcceptResult {
  std::vector<int> path;    // accepted node ids
  std::vector<int> tokens;  // emitted this round
  int forward_passes = 0;
};

/// One masked pass over all nodes, then walks down from the first layer
/// keeping the child that matches the base head's argmax. Accepted K/V rows
/// are gathered into the cache in path order.
TreeAcceptResult verify_tree(const ModelF& model, const TokenTree& tree, std::span<const int> node_tokens,
                             DecodeState& state);

// ---------------------------------------------------------------------------
// Accuracy profiling

struct ProfileReport {
  HeadAccuracyProfile profile;
  std::vector<double> top1;       // per draft position
  std::vector<double> top_r;      // cumulative top-R per draft position
  std::vector<double> half_a_top1;
  std::vector<double> half_b_top1;
  long scored_positions = 0;
  double gamma_hat = 0.0;
  double max_half_difference = 0.0;
  double max_monotonicity_violation = 0.0;  // largest top1[i+1] - top1[i]
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr long kMinProfilePositions = 1000;

/// Rank frequencies of the true token under the leap draft's conditioning:
/// position i is scored with the head and look-back step of its draft tag.
/// Windows alternate between two halves for the consistency check.
ProfileReport estimate_profile(const ModelF& model, std::span<const Window> windows, const LeapSchedule& schedule,
                               int top_ranks);

/// Least-squares slope of log accuracy against (offset - 1) for the leap
/// positions, negated. Positions with zero accuracy are skipped.
double fit_gamma(std::span<const double> top1, int stride);

/// Profile usable for decoding: position 1 is the base head's own greedy
/// token, so it is certain and needs no alternatives.
HeadAccuracyProfile decoding_profile(const HeadAccuracyProfile& profile);

void write_profile_csv(const HeadAccuracyProfile& profile, const std::string& path);
HeadAccuracyProfile read_profile_csv(const std::string& path);
/// One `id parent layer rank` line per node.
void write_tree(const TokenTree& tree, const std::string& path);

}  // namespace lmtp
