// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// if any fails. Usage: acceptance [work_dir]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lmtp/checkpoint.hpp"
#include "lmtp/commands.hpp"
#include "lmtp/decode.hpp"
#include "lmtp/spectree.hpp"
#include "lmtp/theory.hpp"
#include "lmtp/training.hpp"

namespace fs = std::filesystem;
using namespace lmtp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Independent oracles (long double, written without the library's helpers)

long double oracle_vanilla(long double g, int n) {
  long double s = 0;
  for (int m = 1; m <= n; ++m) s += std::exp(-g * m * (m - 1) / 2.0L);
  return s;
}

long double oracle_leap(long double g, int n, int k) {
  long double s = 0, e = 0;
  for (int i = 1; i <= k * (n - 1) + 1; ++i) {
    e += i + (i - 1) % k - 1;
    s += std::exp(-g * e);
  }
  return s;
}

long double oracle_delta(long double g, int n, int k) { return oracle_leap(g, n, k) - oracle_vanilla(g, n); }

ModelConfig small_config(int stride, int heads = 4) {
  ModelConfig c;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_attn_heads = 4;
  c.max_positions = 128;
  c.n_pred_heads = heads;
  c.leap_stride = stride;
  return c;
}

// Random backbone and randomized extra heads, so drafts disagree with the base head.
ModelF scrambled(const ModelConfig& config, std::uint64_t seed) {
  ModelF m = ModelF::random(config, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<float> normal(0.0f, 0.5f);
  for (auto& h : m.weights().extra_heads) {
    for (float& w : h.w.flat()) w = normal(rng);
    for (float& b : h.b.flat()) b = 0.1f * normal(rng);
  }
  return m;
}

std::vector<int> random_prompt(std::mt19937_64& rng, int lo, int hi) {
  std::vector<int> p{ByteTokenizer::kBos};
  const int len = lo + static_cast<int>(rng() % static_cast<unsigned>(hi - lo + 1));
  while (static_cast<int>(p.size()) < len) p.push_back(static_cast<int>(rng() % 256));
  return p;
}

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return INFINITY;
  float m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------

Outcome closed_forms() {
  const double v = theory::expected_length_vanilla({0.1, 4, 1});
  const double l = theory::expected_length_leap({0.1, 4, 2});
  const double dv = std::abs(v - static_cast<double>(oracle_vanilla(0.1L, 4)));
  const double dl = std::abs(l - static_cast<double>(oracle_leap(0.1L, 4, 2)));
  bool exact = true;
  for (int n = 1; n <= 16; ++n)
    for (int k = 1; k <= 4; ++k) {
      exact &= theory::expected_length_vanilla({0.0, n, k}) == n;
      exact &= theory::expected_length_leap({0.0, n, k}) == k * (n - 1) + 1;
    }
  return {dv <= 1e-6 && dl <= 1e-6 && exact,
          fmt("E_vanilla(0.1,4)=%.9f E_leap(0.1,4,2)=%.9f |diff to oracle| %.1e/%.1e; gamma=0 exact: %s", v, l, dv, dl,
              exact ? "yes" : "no")};
}

Outcome crossover() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  double max_scaled = 0;
  std::ostringstream roots;
  for (int n = 2; n <= 16; ++n) {
    const double g = theory::crossover_gamma(n, 2, 1e-9);
    ok &= g > 0 && std::abs(static_cast<double>(oracle_delta(g, n, 2))) <= 1e-9;
    ok &= oracle_delta(0.5 * g, n, 2) > 0 && oracle_delta(2 * g, n, 2) < 0;
    max_scaled = std::max(max_scaled, g * n * n);
    if (n == 2 || n == 16) roots << " g*(" << n << ")=" << g;
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 1.0, fmt("n=2..16 sign change verified;%s max g*n^2=%.3f; %.3fs", roots.str().c_str(), max_scaled, secs)};
}

Outcome exact_bound() {
  int holds = 0, total = 0;
  double tightest = INFINITY;
  for (int n : {2, 4, 8, 16})
    for (int j = 0; j < 20; ++j) {
      const double g = std::pow(10.0, -3.0 + 3.0 * j / 19.0);
      // Oracle side: |vanilla - truncated leap sum| from the long-double closed forms.
      long double d1 = 0;
      for (int m = 1; m <= n; ++m) {
        long double leap_e = 0;
        for (int i = 1; i <= m; ++i) leap_e += i + (i - 1) % 2 - 1;
        d1 += std::exp(-g * leap_e) - std::exp(-g * m * (m - 1) / 2.0L);
      }
      const auto diag = theory::bound_diagnostics({g, n, 2});
      const long double bound = 0.5L * (1 - std::exp(-g * (n + 1) * (n + 1) / 2.0L));
      const bool ok = diag.upper_holds && std::abs(d1) <= bound;
      holds += ok;
      ++total;
      tightest = std::min(tightest, static_cast<double>(bound - std::abs(d1)));
    }
  return {holds == total, fmt("%d/%d grid points satisfy the bound; min slack %.3e", holds, total, tightest)};
}

// Seeds follow the simulate command (config seed, then +1 per point).
Outcome monte_carlo(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  int within = 0, total = 0;
  double worst = 0;
  for (double g : {0.05, 0.1, 0.5})
    for (int n : {4, 8})
      for (int k : {1, 2}) {
        const auto mc = theory::monte_carlo_length({g, n, k}, 1000000, seed++);
        const double closed = static_cast<double>(oracle_leap(g, n, k));
        const double z = mc.standard_error > 0 ? std::abs(mc.mean - closed) / mc.standard_error : 0.0;
        worst = std::max(worst, z);
        within += z <= 3.0;
        ++total;
      }
  const double secs = seconds_since(t0);
  return {within == total && secs < 60, fmt("%d/%d points within 3 SE (worst %.2f SE); %.1fs", within, total, worst, secs)};
}

Outcome equivalences() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);

  // (a) Masked tree batch vs. each node's root path run causally.
  const ModelF model = scrambled(small_config(2), 11);
  float worst_a = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int size = 1 + static_cast<int>(rng() % 31);
    std::vector<TreeNode> nodes;
    std::map<int, int> ranks;
    for (int i = 0; i < size; ++i) {
      const int parent = i == 0 ? -1 : static_cast<int>(rng() % static_cast<unsigned>(i + 1)) - 1;
      nodes.push_back({.id = i, .parent = parent, .layer = parent < 0 ? 1 : nodes[parent].layer + 1, .rank = ++ranks[parent]});
    }
    const TokenTree tree(std::move(nodes));
    std::vector<int> tokens(size);
    for (int& t : tokens) t = static_cast<int>(rng() % 256);
    const DecodeState state = prefill(model, random_prompt(rng, 1, 12), 1);
    const auto att = tree_mask(tree, state.length());
    const auto batched = model.forward(tokens, att.positions, att.mask, state.cache);
    for (int node = 0; node < size; ++node) {
      std::vector<int> path;
      for (int a : tree.ancestors(node)) path.push_back(tokens[a]);
      path.push_back(tokens[node]);
      const auto seq = model.forward_causal(path, state.cache).hidden;
      worst_a = std::max(worst_a, max_abs_diff(seq.row_span(seq.rows() - 1), batched.hidden.row_span(node)));
    }
  }

  // (b) Leap draft from retained hidden rows vs. a fresh full pass over the
  // committed sequence, after several accept rounds.
  float worst_b = 0;
  for (int trial = 0; trial < 10; ++trial) {
    DecodeState state;
    const auto prompt = random_prompt(rng, 3, 12);
    decode_loop(model, prompt, {.strategy = Strategy::kLmtp, .max_new = 10 + trial}, state);
    const DraftCandidates draft = draft_lmtp(model, state);
    const auto hidden = model.forward_causal(state.tokens, KvCache<float>(model.config())).hidden;
    const int t = hidden.rows() - 1;
    for (int i = 0; i < draft.size(); ++i) {
      const auto fresh = model.logits_row(hidden.row_span(t + draft.tags[i].step), draft.tags[i].head);
      worst_b = std::max(worst_b, max_abs_diff(fresh, draft.logits.row_span(i)));
    }
  }

  // (c) One token at a time through the cache vs. one full causal pass.
  float worst_c = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto seq = random_prompt(rng, 20, 60);
    const auto full = model.forward_causal(seq, KvCache<float>(model.config())).hidden;
    KvCache<float> cache(model.config());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const auto step = model.forward_causal(std::span<const int>(&seq[t], 1), cache);
      worst_c = std::max(worst_c, max_abs_diff(step.hidden.row_span(0), full.row_span(static_cast<int>(t))));
      cache.commit_all(step.pending);
    }
  }
  const double secs = seconds_since(t0);
  return {worst_a <= 1e-5f && worst_b <= 1e-5f && worst_c <= 1e-5f && secs < 60,
          fmt("max |diff| tree/path %.1e, cached/fresh draft %.1e, incremental/full %.1e; %.1fs", worst_a, worst_b,
              worst_c, secs)};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelD model = scrambled(small_config(2), 21).cast<double>();
  std::mt19937_64 rng(7);
  std::vector<Window> batch(2);
  for (auto& w : batch)
    for (int t = 0; t < 24; ++t) {
      w.tokens.push_back(static_cast<int>(rng() % 258));
      w.segment.push_back(t < 20 ? 0 : 1);
    }
  const LeapSchedule schedule(4, 2);
  Weights<double> grads = Weights<double>::zeros(model.config());
  full_loss(model, batch, 0.2, schedule, &grads);
  std::vector<Matrix<double>*> g, p;
  std::vector<std::string> names;
  grads.visit([&](const std::string&, ParamGroup, Matrix<double>& m) { g.push_back(&m); });
  model.weights().visit([&](const std::string& name, ParamGroup, Matrix<double>& m) {
    p.push_back(&m);
    names.push_back(name);
  });
  int ok = 0;
  double worst = 0;
  for (int checked = 0; checked < 50; ++checked) {
    const std::size_t t = rng() % p.size();
    std::size_t idx = rng() % p[t]->size();
    // Embedding rows that never occur have zero gradient; sample used rows.
    if (names[t] == "tok_emb")
      idx = static_cast<std::size_t>(batch[rng() % 2].tokens[rng() % 24]) * p[t]->cols() + rng() % p[t]->cols();
    else if (names[t] == "pos_emb")
      idx = (rng() % 24) * p[t]->cols() + rng() % p[t]->cols();
    double& x = p[t]->data()[idx];
    const double saved = x, eps = 1e-5;
    x = saved + eps;
    const double up = full_loss(model, batch, 0.2, schedule).total;
    x = saved - eps;
    const double down = full_loss(model, batch, 0.2, schedule).total;
    x = saved;
    const double numeric = (up - down) / (2 * eps), analytic = g[t]->data()[idx];
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    const double err = scale > 1e-6 ? std::abs(numeric - analytic) / scale : std::abs(numeric - analytic);
    worst = std::max(worst, err);
    ok += err <= 1e-4;
  }
  const double secs = seconds_since(t0);
  return {ok == 50 && secs < 60, fmt("%d/50 parameters within 1e-4 relative (worst %.2e); %.1fs", ok, worst, secs)};
}

Outcome reductions() {
  bool loss_eq = true, tags_eq = true, draft_eq = true, formula_eq = true;
  // Loss: stride-1 leap objective vs. contiguous multi-token loss assembled by hand.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelF model = scrambled(small_config(1), 30 + seed);
    std::mt19937_64 rng(seed);
    Window w;
    w.tokens = random_prompt(rng, 12, 40);
    w.segment.assign(w.tokens.size(), 0);
    const double beta = 0.1 * static_cast<double>(seed);
    const auto leap = full_loss(model, std::span<const Window>(&w, 1), beta, LeapSchedule(4, 1));
    const auto hidden = model.forward_causal(w.tokens, KvCache<float>(model.config())).hidden;
    double mtp = 0;
    for (int h = 1; h <= 4; ++h) {
      LeapAlignment pairs;
      pairs.head = pairs.offset = h;
      for (int t = 0; t + h < static_cast<int>(w.tokens.size()); ++t) {
        pairs.positions.push_back(t);
        pairs.targets.push_back(w.tokens[t + h]);
      }
      mtp += (h == 1 ? 1.0 : beta) * cross_entropy(model.logits(hidden, h), pairs);
    }
    loss_eq &= leap.total == mtp;

    const DecodeState state = prefill(model, w.tokens, 1);
    const auto a = draft_lmtp(model, state), b = draft_mtp(model, state);
    draft_eq &= a.tags == b.tags && a.logits == b.logits;
  }
  for (int i = 1; i <= 16; ++i) tags_eq &= lmtp_tag(i, 1) == DraftTag{i, 0};
  for (double g = 0; g <= 5.0; g += 0.0625)
    for (int n = 1; n <= 16; ++n) {
      const theory::AttenuationParams p{g, n, 1};
      formula_eq &= theory::expected_length_leap(p) == theory::expected_length_vanilla(p);
      formula_eq &= theory::delta_decomposition(p).delta == 0.0;
    }
  return {loss_eq && tags_eq && draft_eq && formula_eq,
          fmt("bitwise equal: losses %s, tags %s, drafts %s, formulas %s", loss_eq ? "yes" : "no",
              tags_eq ? "yes" : "no", draft_eq ? "yes" : "no", formula_eq ? "yes" : "no")};
}

// Shared state for the trained-model criteria.
struct Trained {
  RunConfig config;
  fs::path checkpoint;
  fs::path mtp_checkpoint;  // stride-1 heads on the same base, for the mtp baseline
  ProfileReport profile;
  double seconds = 0;
};

Outcome attenuation(Trained& run) {
  const auto t0 = std::chrono::steady_clock::now();
  for (Stage s : {Stage::kPretrain, Stage::kWarmup, Stage::kFull}) {
    const auto summary = cmd_train(run.config, s);
    std::cerr << "  " << to_string(s) << ": " << summary.result.history.size() << " steps, loss " << summary.final_loss
              << ", validation NTP " << summary.validation_ntp << "\n";
    run.checkpoint = summary.checkpoint;
  }
  run.profile = cmd_profile(run.config, run.checkpoint);
  RunConfig mtp = run.config;
  mtp.model.leap_stride = 1;
  mtp.checkpoint_dir = run.config.checkpoint_dir + "/mtp";
  cmd_train(mtp, Stage::kWarmup, stage_checkpoint(run.config, Stage::kPretrain));
  run.mtp_checkpoint = cmd_train(mtp, Stage::kFull).checkpoint;
  run.seconds = seconds_since(t0);
  const auto& p = run.profile;
  std::ostringstream top1;
  for (double a : p.top1) top1 << fmt(" %.3f", a);
  const bool ok = p.max_monotonicity_violation <= 0.02 && p.max_half_difference <= 0.05 && run.seconds < 1800;
  return {ok, fmt("top-1 by position:%s; max rise %.4f, split-half gap %.4f, gamma_hat %.4f (x n^2 = %.2f); %.0fs",
                  top1.str().c_str(), p.max_monotonicity_violation, p.max_half_difference, p.gamma_hat,
                  p.gamma_hat * 16, run.seconds)};
}

struct StrategyTotals {
  DecodeStats stats;
  int mismatches = 0;
};

// `mtp_model` (stride 1) drives the mtp strategy; the leap strategies use `model`.
std::map<Strategy, StrategyTotals> decode_all(const ModelF& model, const ModelF& mtp_model,
                                              const std::vector<std::vector<int>>& prompts, const TokenTree& tree,
                                              int max_new) {
  std::map<Strategy, StrategyTotals> out;
  for (const auto& prompt : prompts) {
    const auto reference = ar_decode(model, prompt, max_new, ByteTokenizer::kEos);
    const auto mtp_reference = ar_decode(mtp_model, prompt, max_new, ByteTokenizer::kEos);
    out[Strategy::kAr].stats.merge(reference.stats);
    for (Strategy s : all_strategies()) {
      if (s == Strategy::kAr) continue;
      const auto r = decode_loop(s == Strategy::kMtp ? mtp_model : model, prompt, {.strategy = s, .max_new = max_new, .stop_token = ByteTokenizer::kEos, .tree = &tree});
      out[s].stats.merge(r.stats);
      out[s].mismatches += r.tokens != (s == Strategy::kMtp ? mtp_reference : reference).tokens;
    }
  }
  return out;
}

std::map<Strategy, StrategyTotals> trained_totals, untrained_totals;

Outcome losslessness(const Trained& run) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelF trained = load_checkpoint(run.checkpoint);
  const ModelF trained_mtp = load_checkpoint(run.mtp_checkpoint);
  const ModelF untrained = ModelF::random(run.config.model, 99);
  ModelConfig stride_one = run.config.model;
  stride_one.leap_stride = 1;
  const ModelF untrained_mtp = ModelF::random(stride_one, 99);
  const TokenTree tree = build_tree(decoding_profile(run.profile.profile), run.config.tree_budget,
                                    run.config.tree_max_children, run.config.tree_max_depth);

  // Random prompts: random-length prefixes of random validation documents.
  const Corpus corpus = load_corpus(run.config.corpus);
  const auto validation = split_corpus(corpus, run.config.val_fraction).validation.documents;
  std::mt19937_64 rng(12345);
  std::vector<std::vector<int>> prompts;
  while (prompts.size() < 100) {
    const auto& doc = validation[rng() % validation.size()];
    const int len = std::min<int>(static_cast<int>(doc.size()) - 1, 4 + static_cast<int>(rng() % 29));
    if (len >= 2) prompts.emplace_back(doc.begin(), doc.begin() + len);
  }
  trained_totals = decode_all(trained, trained_mtp, prompts, tree, run.config.max_new);
  untrained_totals = decode_all(untrained, untrained_mtp, prompts, tree, run.config.max_new);
  int mismatches = 0;
  for (const auto* totals : {&trained_totals, &untrained_totals})
    for (const auto& [s, t] : *totals) mismatches += t.mismatches;
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 120,
          fmt("100 prompts x {mtp, fmtp, lmtp, lmtp+tree} x {trained, untrained}: %d mismatching outputs, %ld tokens; %.1fs",
              mismatches, trained_totals[Strategy::kAr].stats.tokens + untrained_totals[Strategy::kAr].stats.tokens, secs)};
}

Outcome speed_accounting(const Trained& run) {
  if (trained_totals.empty()) return {false, "no decoding results (losslessness run failed)"};
  bool ok = true;
  std::ostringstream s;
  for (const auto* totals : {&trained_totals, &untrained_totals}) {
    s << (totals == &trained_totals ? "trained:" : " untrained:");
    for (const auto& [strategy, t] : *totals) {
      ok &= t.stats.mean_accept() >= 1.0;
      s << fmt(" %s %.3f", to_string(strategy).c_str(), t.stats.mean_accept());
    }
  }
  const double lmtp = trained_totals[Strategy::kLmtp].stats.mean_accept();
  const double mtp = trained_totals[Strategy::kMtp].stats.mean_accept();
  s << fmt("; trained lmtp (k=2) / mtp (k=1 heads, same base) accepted length %.3f/%.3f (gamma_hat n^2 = %.2f)", lmtp, mtp,
           run.profile.gamma_hat * run.config.model.n_pred_heads * run.config.model.n_pred_heads);
  return {ok, s.str()};
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "lmtp_acceptance";
  fs::create_directories(work);

  Trained run;
  run.config = load_config(LMTP_SOURCE_DIR "/configs/default.cfg");
  run.config.corpus = LMTP_SOURCE_DIR "/data/corpus.txt";
  run.config.checkpoint_dir = (work / "checkpoints").string();
  run.config.output_dir = (work / "out").string();

  std::map<int, Outcome> results;
  const auto stage = [&](int id, const std::function<Outcome()>& f) {
    std::cerr << "criterion " << id << " ...\n";
    results[id] = guarded(f);
  };
  stage(2, closed_forms);
  stage(3, crossover);
  stage(4, exact_bound);
  stage(5, [&] { return monte_carlo(run.config.seed); });
  stage(6, equivalences);
  stage(7, gradient_check);
  stage(9, reductions);
  stage(8, [&] { return attenuation(run); });
  stage(1, [&] { return run.checkpoint.empty() ? Outcome{false, "no trained model"} : losslessness(run); });
  stage(10, [&] { return speed_accounting(run); });

  static const char* kNames[] = {"",
                                 "losslessness",
                                 "closed forms",
                                 "crossover",
                                 "exact bound",
                                 "monte carlo",
                                 "equivalence oracles",
                                 "gradient check",
                                 "attenuation",
                                 "stride-1 reductions",
                                 "speed accounting"};
  bool all = true;
  for (const auto& [id, r] : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << id << " " << kNames[id] << ": " << r.detail << "\n";
    all &= r.pass;
  }
  return all ? 0 : 1;
}
