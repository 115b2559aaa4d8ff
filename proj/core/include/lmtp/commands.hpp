#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lmtp/decode.hpp"
#include "lmtp/run_config.hpp"
#include "lmtp/spectree.hpp"

namespace lmtp {

/// A speculative strategy produced different tokens than greedy decoding.
class LosslessnessError : public std::runtime_error {
 public:
  LosslessnessError(const std::string& strategy, int prompt_id, int position);
  int prompt_id() const { return prompt_id_; }
  int position() const { return position_; }

 private:
  int prompt_id_;
  int position_;
};

/// checkpoint_dir/{base,warmup,full}.ckpt
std::filesystem::path stage_checkpoint(const RunConfig& config, Stage stage);

struct TrainSummary {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  double final_loss = 0.0;
  double validation_ntp = 0.0;
  TrainResult result;
};

/// pretrain: fresh model, next-token loss. warmup: needs the base checkpoint,
/// re-initializes heads 2..n and trains only them. full: needs the warmup
/// checkpoint and tunes everything. `input` overrides the stage's default
/// input checkpoint.
TrainSummary cmd_train(const RunConfig& config, Stage stage, const std::optional<std::filesystem::path>& input = {});

struct StrategySummary {
  DecodeStats stats;
  double speedup = 0.0;
};

struct BenchmarkReport {
  std::vector<StatsRow> rows;                  // per strategy and prompt
  std::map<std::string, StrategySummary> summary;  // per strategy
  std::filesystem::path csv;
};

/// Decodes every prompt with all strategies, checks each against greedy
/// decoding, and writes bench.csv. `profile` (a position,rank,accuracy CSV)
/// shapes the tree; without it a profile is estimated on the validation
/// split. `mtp_checkpoint` optionally supplies a separately trained stride-1
/// model for the mtp row.
BenchmarkReport cmd_bench(const RunConfig& config, const std::filesystem::path& checkpoint,
                          const std::optional<std::filesystem::path>& profile = {},
                          const std::optional<std::filesystem::path>& mtp_checkpoint = {});

/// Writes profile.csv, accuracy.csv, profile_summary.csv and tree.txt.
ProfileReport cmd_profile(const RunConfig& config, const std::filesystem::path& checkpoint);

struct SimulationSummary {
  std::vector<double> crossover;  // gamma* for n = n_min..n_max (k = 2)
  bool bounds_hold = true;
  int monte_carlo_outliers = 0;   // points further than 3 standard errors
};

/// Writes curves.csv, crossover.csv, bounds.csv and montecarlo.csv.
SimulationSummary cmd_simulate(const RunConfig& config);

/// Continues each prompt line greedily and writes the result as a corpus.
std::filesystem::path cmd_distill(const RunConfig& config, const std::filesystem::path& checkpoint,
                                  const std::filesystem::path& prompts, const std::filesystem::path& output);

/// Prompts for benchmarking: each line of config.prompts, or the first
/// prompt_len tokens of validation documents.
std::vector<std::vector<int>> load_prompts(const RunConfig& config);

}  // namespace lmtp
