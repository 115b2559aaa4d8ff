#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmtp/model_config.hpp"
#include "lmtp/training.hpp"

namespace lmtp {

struct StageSettings {
  double lr = 1e-3;
  int epochs = 1;
  int max_steps = 0;
  double warmup_ratio = 0.1;
  double beta = 0.0;
};

/// Everything a run needs. Text form is one `section.key = value` per line;
/// `#` starts a comment; unknown keys are an error.
struct RunConfig {
  ModelConfig model;

  int seq_len = 128;
  int batch_size = 8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  double val_fraction = 0.05;
  StageSettings pretrain{.lr = 3e-3, .epochs = 1, .max_steps = 0, .warmup_ratio = 0.05, .beta = 0.0};
  StageSettings warmup{.lr = 1e-3, .epochs = 1, .max_steps = 0, .warmup_ratio = 0.1, .beta = 0.0};
  StageSettings full{.lr = 5e-4, .epochs = 1, .max_steps = 0, .warmup_ratio = 0.1, .beta = 0.2};

  int max_new = 64;
  int num_prompts = 100;
  int prompt_len = 16;
  int tree_budget = 25;
  int tree_max_children = 3;
  int tree_max_depth = 7;
  int top_ranks = 3;
  int distill_max_new = 64;

  std::vector<double> gammas{0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0};
  std::vector<int> ks{1, 2};
  int theory_n = 4;
  int crossover_n_min = 2;
  int crossover_n_max = 16;
  double crossover_tol = 1e-9;
  long mc_trials = 1000000;

  std::string corpus = "data/corpus.txt";
  std::string warmup_corpus;  // empty: use `corpus`
  std::string checkpoint_dir = "checkpoints";
  std::string output_dir = "out";
  std::string prompts;  // empty: prompts are cut from the validation split

  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
  TrainingConfig training(Stage stage) const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Every key, in a fixed order, with round-trippable values.
std::string serialize_config(const RunConfig& config);

}  // namespace lmtp
