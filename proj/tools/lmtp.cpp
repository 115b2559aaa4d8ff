// Command-line driver: train, bench, profile, simulate, distill.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "lmtp/commands.hpp"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

lmtp::RunConfig resolve(const GlobalOptions& g) {
  lmtp::RunConfig config = g.config_path.empty() ? lmtp::RunConfig{} : lmtp::load_config(g.config_path);
  if (g.seed) config.seed = *g.seed;
  if (!g.out_dir.empty()) config.output_dir = g.out_dir;
  config.validate();
  return config;
}

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leap multi-token prediction: training, speculative decoding and acceptance-length simulation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may also follow the subcommand
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Run configuration (section.key = value lines)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out", g.out_dir, "Override the output directory");

  std::string stage = "warmup";
  std::string checkpoint;
  auto* train = app.add_subcommand("train", "Train one stage and write its checkpoint and loss CSV");
  train->add_option("--stage", stage, "pretrain | warmup | full")
      ->check(CLI::IsMember({"pretrain", "warmup", "full"}));
  train->add_option("--checkpoint", checkpoint, "Input checkpoint (defaults to the previous stage's)");

  std::string profile_path, mtp_checkpoint;
  auto* bench = app.add_subcommand("bench", "Compare decoding strategies; aborts on any output mismatch");
  bench->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  bench->add_option("--profile", profile_path, "Accuracy profile CSV used to shape the tree");
  bench->add_option("--mtp-checkpoint", mtp_checkpoint, "Separately trained stride-1 model for the mtp row");

  auto* profile = app.add_subcommand("profile", "Per-position head accuracy and attenuation fit");
  profile->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();

  app.add_subcommand("simulate", "Acceptance-length curves, crossover sweep, bounds and Monte Carlo");

  std::string prompts, output;
  auto* distill = app.add_subcommand("distill", "Greedy self-distillation of a prompt file");
  distill->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  distill->add_option("--prompts", prompts, "One prompt per line")->required();
  distill->add_option("--output", output, "Corpus file to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const lmtp::RunConfig config = resolve(g);
    if (*train) {
      const auto s = lmtp::cmd_train(config, lmtp::parse_stage(stage), opt_path(checkpoint));
      std::cout << "stage " << stage << ": " << s.result.history.size() << " steps, final loss " << s.final_loss
                << ", validation NTP loss " << s.validation_ntp << "\n"
                << "checkpoint " << s.checkpoint.string() << "\nloss history " << s.loss_csv.string() << '\n';
    } else if (*bench) {
      const auto r = lmtp::cmd_bench(config, checkpoint, opt_path(profile_path), opt_path(mtp_checkpoint));
      for (lmtp::Strategy s : lmtp::all_strategies()) {
        const auto& agg = r.summary.at(lmtp::to_string(s));
        std::cout << lmtp::to_string(s) << ": mean accepted " << agg.stats.mean_accept() << ", "
                  << agg.stats.tokens_per_sec() << " tok/s, speedup " << agg.speedup << '\n';
      }
      std::cout << "report " << r.csv.string() << '\n';
    } else if (*profile) {
      const auto r = lmtp::cmd_profile(config, checkpoint);
      std::cout << "scored positions " << r.scored_positions << "\ntop-1 by draft position:";
      for (double a : r.top1) std::cout << ' ' << a;
      std::cout << "\ngamma_hat " << r.gamma_hat << "\nmax split-half difference " << r.max_half_difference
                << "\nmax monotonicity violation " << r.max_monotonicity_violation << '\n';
    } else if (app.got_subcommand("simulate")) {
      const auto s = lmtp::cmd_simulate(config);
      std::cout << "crossover gamma*:";
      for (double x : s.crossover) std::cout << ' ' << x;
      std::cout << "\nexact bound holds on grid: " << (s.bounds_hold ? "yes" : "NO")
                << "\nMonte Carlo points beyond 3 stderr: " << s.monte_carlo_outliers << '\n';
      if (!s.bounds_hold) return 2;
    } else if (*distill) {
      std::cout << "wrote " << lmtp::cmd_distill(config, checkpoint, prompts, output).string() << '\n';
    }
  } catch (const lmtp::LosslessnessError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
