#include "lmtp/commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "lmtp/checkpoint.hpp"
#include "lmtp/corpus.hpp"
#include "lmtp/theory.hpp"

namespace lmtp {

namespace fs = std::filesystem;

namespace {

fs::path output_file(const RunConfig& config, const std::string& name) {
  fs::create_directories(config.output_dir);
  return fs::path(config.output_dir) / name;
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  return out;
}

ModelF load_matching(const RunConfig& config, const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  ModelF model = load_checkpoint(path);
  if (!(model.config() == config.model))
    throw std::invalid_argument("checkpoint " + path.string() + " was trained with a different model section");
  return model;
}

std::vector<Window> validation_windows(const RunConfig& config) {
  const CorpusSplit split = split_corpus(load_corpus(config.corpus), config.val_fraction);
  return pack_windows(split.validation, config.seq_len, 2);
}

HeadAccuracyProfile fallback_profile(int layers, int ranks) {
  HeadAccuracyProfile p;
  for (int i = 0; i < layers; ++i) {
    std::vector<double> row;
    for (int r = 0; r < ranks; ++r) row.push_back(std::pow(0.8, i) * std::pow(0.5, r));
    p.acc.push_back(row);
  }
  return p;
}

}  // namespace

LosslessnessError::LosslessnessError(const std::string& strategy, int prompt_id, int position)
    : std::runtime_error("strategy " + strategy + " diverged from greedy decoding on prompt " +
                         std::to_string(prompt_id) + " at generated position " + std::to_string(position)),
      prompt_id_(prompt_id),
      position_(position) {}

fs::path stage_checkpoint(const RunConfig& config, Stage stage) {
  const char* name = stage == Stage::kPretrain ? "base.ckpt" : stage == Stage::kWarmup ? "warmup.ckpt" : "full.ckpt";
  return fs::path(config.checkpoint_dir) / name;
}

TrainSummary cmd_train(const RunConfig& config, Stage stage, const std::optional<fs::path>& input) {
  config.validate();
  const std::string corpus_path =
      stage == Stage::kWarmup && !config.warmup_corpus.empty() ? config.warmup_corpus : config.corpus;
  const Corpus corpus = load_corpus(corpus_path);
  corpus.validate(static_cast<int>(config.model.vocab_size));
  const CorpusSplit split = split_corpus(corpus, config.val_fraction);
  const std::vector<Window> train_windows = pack_windows(split.train, config.seq_len, 2);
  const std::vector<Window> val_windows = pack_windows(split.validation, config.seq_len, 2);
  if (train_windows.empty()) throw std::invalid_argument("corpus " + corpus_path + " yields no training windows");

  ModelF model = [&] {
    switch (stage) {
      case Stage::kPretrain:
        return input ? load_matching(config, *input) : ModelF::random(config.model, config.seed);
      case Stage::kWarmup: {
        // Heads are rebuilt here, so a base trained under another stride serves too.
        const fs::path base = input.value_or(stage_checkpoint(config, Stage::kPretrain));
        if (!fs::exists(base)) throw std::runtime_error("checkpoint not found: " + base.string());
        const ModelF loaded = load_checkpoint(base);
        ModelConfig relaxed = loaded.config();
        relaxed.leap_stride = config.model.leap_stride;
        if (!(relaxed == config.model))
          throw std::invalid_argument("checkpoint " + base.string() + " was trained with a different model section");
        ModelF m(config.model);
        m.weights() = loaded.weights();
        m.reset_extra_heads();
        return m;
      }
      case Stage::kFull:
        return load_matching(config, input.value_or(stage_checkpoint(config, Stage::kWarmup)));
    }
    throw std::logic_error("unreachable");
  }();

  TrainSummary summary;
  summary.result = train(model, train_windows, config.training(stage));
  fs::create_directories(config.checkpoint_dir);
  summary.checkpoint = stage_checkpoint(config, stage);
  save_checkpoint(model, summary.checkpoint);
  summary.loss_csv = output_file(config, "loss_" + to_string(stage) + ".csv");
  write_loss_csv(summary.result.history, summary.loss_csv.string());
  if (!summary.result.history.empty()) summary.final_loss = summary.result.history.back().loss;
  if (!val_windows.empty()) summary.validation_ntp = evaluate_ntp(model, val_windows);
  return summary;
}

std::vector<std::vector<int>> load_prompts(const RunConfig& config) {
  std::vector<std::vector<int>> prompts;
  const int min_len = static_cast<int>(config.model.leap_stride);
  auto take = [&](const std::vector<int>& doc) {
    std::vector<int> p(doc.begin(), doc.begin() + std::min<std::size_t>(doc.size(), config.prompt_len));
    if (!p.empty() && p.back() == ByteTokenizer::kEos) p.pop_back();
    if (static_cast<int>(p.size()) >= std::max(min_len, 1)) prompts.push_back(std::move(p));
  };
  const Corpus source = config.prompts.empty() ? split_corpus(load_corpus(config.corpus), config.val_fraction).validation
                                               : load_corpus(config.prompts);
  for (const auto& doc : source.documents) {
    if (static_cast<int>(prompts.size()) == config.num_prompts) break;
    take(doc);
  }
  if (prompts.empty()) throw std::invalid_argument("no usable prompts");
  return prompts;
}

BenchmarkReport cmd_bench(const RunConfig& config, const fs::path& checkpoint, const std::optional<fs::path>& profile,
                          const std::optional<fs::path>& mtp_checkpoint) {
  config.validate();
  const ModelF model = load_matching(config, checkpoint);
  std::optional<ModelF> mtp_model;
  if (mtp_checkpoint) {
    mtp_model = load_checkpoint(*mtp_checkpoint);
    if (mtp_model->config().leap_stride != 1) throw std::invalid_argument("mtp checkpoint must use leap_stride = 1");
  }
  const auto prompts = load_prompts(config);
  const LeapSchedule schedule = LeapSchedule::from(model.config());

  HeadAccuracyProfile acc;
  if (profile) {
    acc = read_profile_csv(profile->string());
  } else {
    try {
      acc = estimate_profile(model, validation_windows(config), schedule, config.top_ranks).profile;
    } catch (const InsufficientDataError& e) {
      std::clog << "lmtp: " << e.what() << "; using a generic tree profile\n";
      acc = fallback_profile(schedule.leap_horizon(), config.top_ranks);
    }
  }
  const TokenTree tree = build_tree(decoding_profile(acc), config.tree_budget, config.tree_max_children,
                                    std::min(config.tree_max_depth, schedule.leap_horizon()));

  BenchmarkReport report;
  std::vector<DecodeResult> reference(prompts.size());
  for (Strategy strategy : all_strategies()) {
    const ModelF& m = strategy == Strategy::kMtp && mtp_model ? *mtp_model : model;
    StrategySummary& agg = report.summary[to_string(strategy)];
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      DecodeOptions opts{.strategy = strategy, .max_new = config.max_new, .stop_token = ByteTokenizer::kEos,
                         .tree = &tree};
      DecodeResult res = decode_loop(m, prompts[p], opts);
      if (strategy == Strategy::kAr) {
        reference[p] = res;
      } else if (!(strategy == Strategy::kMtp && mtp_model)) {
        const auto& want = reference[p].tokens;
        const auto mismatch = std::mismatch(res.tokens.begin(), res.tokens.end(), want.begin(), want.end());
        if (mismatch.first != res.tokens.end() || mismatch.second != want.end())
          throw LosslessnessError(to_string(strategy), static_cast<int>(p),
                                  static_cast<int>(mismatch.first - res.tokens.begin()));
      }
      const double base_tps = reference[p].stats.tokens_per_sec();
      res.stats.speedup = strategy == Strategy::kAr ? 1.0 : (base_tps > 0 ? res.stats.tokens_per_sec() / base_tps : 0.0);
      agg.stats.merge(res.stats);
      report.rows.push_back({to_string(strategy), static_cast<int>(p), res.stats});
    }
  }
  const double ar_tps = report.summary["ar"].stats.tokens_per_sec();
  for (auto& [name, agg] : report.summary) {
    agg.speedup = name == "ar" ? 1.0 : (ar_tps > 0 ? agg.stats.tokens_per_sec() / ar_tps : 0.0);
    agg.stats.speedup = agg.speedup;
  }

  report.csv = output_file(config, "bench.csv");
  write_stats_csv(report.rows, report.csv.string());
  auto out = open_csv(output_file(config, "bench_summary.csv"));
  out << "strategy,prompts,tokens,passes,mean_accept,tokens_per_sec,speedup\n";
  for (Strategy s : all_strategies()) {
    const auto& agg = report.summary[to_string(s)];
    out << to_string(s) << ',' << prompts.size() << ',' << agg.stats.tokens << ',' << agg.stats.verification_passes
        << ',' << agg.stats.mean_accept() << ',' << agg.stats.tokens_per_sec() << ',' << agg.speedup << '\n';
  }
  write_tree(tree, output_file(config, "bench_tree.txt").string());
  return report;
}

ProfileReport cmd_profile(const RunConfig& config, const fs::path& checkpoint) {
  config.validate();
  const ModelF model = load_matching(config, checkpoint);
  const LeapSchedule schedule = LeapSchedule::from(model.config());
  ProfileReport report = estimate_profile(model, validation_windows(config), schedule, config.top_ranks);

  write_profile_csv(report.profile, output_file(config, "profile.csv").string());
  auto acc = open_csv(output_file(config, "accuracy.csv"));
  acc << "position,head,step,top1,top_r,half_a_top1,half_b_top1\n";
  for (std::size_t i = 0; i < report.top1.size(); ++i) {
    const DraftTag tag = lmtp_tag(static_cast<int>(i) + 1, schedule.stride());
    acc << i + 1 << ',' << tag.head << ',' << tag.step << ',' << report.top1[i] << ',' << report.top_r[i] << ','
        << report.half_a_top1[i] << ',' << report.half_b_top1[i] << '\n';
  }
  auto summary = open_csv(output_file(config, "profile_summary.csv"));
  summary << "scored_positions,gamma_hat,gamma_hat_n2,max_half_difference,max_monotonicity_violation\n"
          << report.scored_positions << ',' << report.gamma_hat << ','
          << report.gamma_hat * schedule.n_heads() * schedule.n_heads() << ',' << report.max_half_difference << ','
          << report.max_monotonicity_violation << '\n';
  const TokenTree tree = build_tree(decoding_profile(report.profile), config.tree_budget, config.tree_max_children,
                                    std::min(config.tree_max_depth, schedule.leap_horizon()));
  write_tree(tree, output_file(config, "tree.txt").string());
  return report;
}

SimulationSummary cmd_simulate(const RunConfig& config) {
  config.validate();
  if (config.gammas.empty()) throw std::invalid_argument("simulate: theory.gammas is empty");
  if (config.ks.empty()) throw std::invalid_argument("simulate: theory.ks is empty");
  SimulationSummary summary;
  theory::emit_curves(config.gammas, config.ks, config.theory_n, output_file(config, "curves.csv").string());

  auto cross = open_csv(output_file(config, "crossover.csv"));
  cross.precision(12);
  cross << "n,k,gamma_star,gamma_star_n2,delta_half,delta_double\n";
  for (int n = config.crossover_n_min; n <= config.crossover_n_max; ++n) {
    const double g = theory::crossover_gamma(n, 2, config.crossover_tol);
    const double half = theory::delta_decomposition({g / 2, n, 2}).delta;
    const double dbl = theory::delta_decomposition({g * 2, n, 2}).delta;
    summary.crossover.push_back(g);
    cross << n << ",2," << g << ',' << g * n * n << ',' << half << ',' << dbl << '\n';
  }

  auto bounds = open_csv(output_file(config, "bounds.csv"));
  bounds << "gamma,n,abs_delta1,upper_bound,upper_holds,delta2,lower_estimate,lower_holds\n";
  for (int n : {2, 4, 8, 16}) {
    for (int i = 0; i < 20; ++i) {
      const double g = std::pow(10.0, -3.0 + 3.0 * i / 19.0);
      const theory::BoundCheck b = theory::bound_diagnostics({g, n, 2});
      summary.bounds_hold = summary.bounds_hold && b.upper_holds;
      bounds << g << ',' << n << ',' << b.abs_delta1 << ',' << b.upper_bound << ',' << b.upper_holds << ','
             << b.delta2 << ',' << b.lower_estimate << ',' << b.lower_holds << '\n';
    }
  }

  auto mc = open_csv(output_file(config, "montecarlo.csv"));
  mc << "gamma,n,k,closed_form,mean,stderr,z\n";
  std::uint64_t seed = config.seed;
  for (double g : {0.05, 0.1, 0.5})
    for (int n : {4, 8})
      for (int k : {1, 2}) {
        const theory::AttenuationParams p{g, n, k};
        const double closed = theory::expected_length_leap(p);
        const auto r = theory::monte_carlo_length(p, config.mc_trials, seed++);
        const double z = r.standard_error > 0 ? (r.mean - closed) / r.standard_error : 0.0;
        if (std::abs(z) > 3.0) ++summary.monte_carlo_outliers;
        mc << g << ',' << n << ',' << k << ',' << closed << ',' << r.mean << ',' << r.standard_error << ',' << z << '\n';
      }
  return summary;
}

fs::path cmd_distill(const RunConfig& config, const fs::path& checkpoint, const fs::path& prompts,
                     const fs::path& output) {
  config.validate();
  const ModelF model = load_matching(config, checkpoint);
  Corpus input = load_corpus(prompts);
  for (auto& doc : input.documents)
    if (!doc.empty() && doc.back() == ByteTokenizer::kEos) doc.pop_back();
  const Corpus generated = self_distill(model, input, config.distill_max_new, config.seed);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_corpus(generated, output);
  return output;
}

}  // namespace lmtp
