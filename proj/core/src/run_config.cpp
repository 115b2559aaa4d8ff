#include "lmtp/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lmtp {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config: bad value for " + key + ": '" + text + "'");
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

template <typename T>
std::string format_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_number(values[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number(std::string key, Access access) {
  return {key,
          [key, access](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(key, v); },
          [access](const RunConfig& c) { return format_number(access(c)); }};
}

template <typename Access>
Field text(std::string key, Access access) {
  return {key, [access](RunConfig& c, const std::string& v) { access(c) = v; },
          [access](const RunConfig& c) { return access(c); }};
}

template <typename T, typename Access>
Field list(std::string key, Access access) {
  return {key, [key, access](RunConfig& c, const std::string& v) { access(c) = parse_list<T>(key, v); },
          [access](const RunConfig& c) { return format_list(access(c)); }};
}

void add_stage(std::vector<Field>& fields, const std::string& name, StageSettings RunConfig::*stage) {
  const std::string p = "train." + name + ".";
  fields.push_back(number<double>(p + "lr", [stage](auto& c) -> auto& { return (c.*stage).lr; }));
  fields.push_back(number<int>(p + "epochs", [stage](auto& c) -> auto& { return (c.*stage).epochs; }));
  fields.push_back(number<int>(p + "max_steps", [stage](auto& c) -> auto& { return (c.*stage).max_steps; }));
  fields.push_back(
      number<double>(p + "warmup_ratio", [stage](auto& c) -> auto& { return (c.*stage).warmup_ratio; }));
  fields.push_back(number<double>(p + "beta", [stage](auto& c) -> auto& { return (c.*stage).beta; }));
}

#define LMTP_FIELD(T, key, member) number<T>(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = [] {
    std::vector<Field> f;
    f.push_back(LMTP_FIELD(std::uint32_t, "model.vocab_size", model.vocab_size));
    f.push_back(LMTP_FIELD(std::uint32_t, "model.d_model", model.d_model));
    f.push_back(LMTP_FIELD(std::uint32_t, "model.n_layers", model.n_layers));
    f.push_back(LMTP_FIELD(std::uint32_t, "model.n_attn_heads", model.n_attn_heads));
    f.push_back(LMTP_FIELD(std::uint32_t, "model.max_positions", model.max_positions));
    f.push_back(LMTP_FIELD(std::uint32_t, "model.n_pred_heads", model.n_pred_heads));
    f.push_back(LMTP_FIELD(std::uint32_t, "model.leap_stride", model.leap_stride));
    f.push_back(LMTP_FIELD(int, "train.seq_len", seq_len));
    f.push_back(LMTP_FIELD(int, "train.batch_size", batch_size));
    f.push_back(LMTP_FIELD(double, "train.weight_decay", weight_decay));
    f.push_back(LMTP_FIELD(double, "train.grad_clip", grad_clip));
    f.push_back(LMTP_FIELD(double, "train.val_fraction", val_fraction));
    add_stage(f, "pretrain", &RunConfig::pretrain);
    add_stage(f, "warmup", &RunConfig::warmup);
    add_stage(f, "full", &RunConfig::full);
    f.push_back(LMTP_FIELD(int, "decode.max_new", max_new));
    f.push_back(LMTP_FIELD(int, "decode.num_prompts", num_prompts));
    f.push_back(LMTP_FIELD(int, "decode.prompt_len", prompt_len));
    f.push_back(LMTP_FIELD(int, "decode.tree_budget", tree_budget));
    f.push_back(LMTP_FIELD(int, "decode.tree_max_children", tree_max_children));
    f.push_back(LMTP_FIELD(int, "decode.tree_max_depth", tree_max_depth));
    f.push_back(LMTP_FIELD(int, "decode.top_ranks", top_ranks));
    f.push_back(LMTP_FIELD(int, "distill.max_new", distill_max_new));
    f.push_back(list<double>("theory.gammas", [](auto& c) -> auto& { return c.gammas; }));
    f.push_back(list<int>("theory.ks", [](auto& c) -> auto& { return c.ks; }));
    f.push_back(LMTP_FIELD(int, "theory.n", theory_n));
    f.push_back(LMTP_FIELD(int, "theory.crossover_n_min", crossover_n_min));
    f.push_back(LMTP_FIELD(int, "theory.crossover_n_max", crossover_n_max));
    f.push_back(LMTP_FIELD(double, "theory.crossover_tol", crossover_tol));
    f.push_back(LMTP_FIELD(long, "theory.mc_trials", mc_trials));
    f.push_back(text("paths.corpus", [](auto& c) -> auto& { return c.corpus; }));
    f.push_back(text("paths.warmup_corpus", [](auto& c) -> auto& { return c.warmup_corpus; }));
    f.push_back(text("paths.checkpoint_dir", [](auto& c) -> auto& { return c.checkpoint_dir; }));
    f.push_back(text("paths.output_dir", [](auto& c) -> auto& { return c.output_dir; }));
    f.push_back(text("paths.prompts", [](auto& c) -> auto& { return c.prompts; }));
    f.push_back(LMTP_FIELD(std::uint64_t, "seed", seed));
    return f;
  }();
  return kFields;
}

#undef LMTP_FIELD

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (seq_len < 2) throw std::invalid_argument("train.seq_len must be >= 2");
  if (seq_len > static_cast<int>(model.max_positions))
    throw std::invalid_argument("train.seq_len exceeds model.max_positions");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train.val_fraction must be in (0, 1)");
  for (Stage s : {Stage::kPretrain, Stage::kWarmup, Stage::kFull}) training(s).validate();
  if (max_new < 0) throw std::invalid_argument("decode.max_new must be >= 0");
  if (num_prompts < 1 || prompt_len < 1) throw std::invalid_argument("decode.num_prompts and prompt_len must be >= 1");
  if (tree_budget < 1 || tree_max_children < 1 || tree_max_depth < 1)
    throw std::invalid_argument("decode tree parameters must be >= 1");
  if (top_ranks < tree_max_children) throw std::invalid_argument("decode.top_ranks must cover tree_max_children");
  if (distill_max_new < 0) throw std::invalid_argument("distill.max_new must be >= 0");
  if (theory_n < 1) throw std::invalid_argument("theory.n must be >= 1");
  if (crossover_n_min < 2 || crossover_n_max < crossover_n_min)
    throw std::invalid_argument("theory crossover range must satisfy 2 <= min <= max");
  for (double g : gammas)
    if (!(g >= 0.0)) throw std::invalid_argument("theory.gammas must be >= 0");
  for (int k : ks)
    if (k < 1) throw std::invalid_argument("theory.ks must be >= 1");
}

TrainingConfig RunConfig::training(Stage stage) const {
  const StageSettings& s = stage == Stage::kPretrain ? pretrain : stage == Stage::kWarmup ? warmup : full;
  return TrainingConfig{.stage = stage,
                        .beta = s.beta,
                        .lr = s.lr,
                        .epochs = s.epochs,
                        .warmup_ratio = s.warmup_ratio,
                        .batch_size = batch_size,
                        .max_steps = s.max_steps,
                        .weight_decay = weight_decay,
                        .grad_clip = grad_clip,
                        .seed = seed};
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto& all = fields();
    auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return f.key == key; });
    if (it == all.end()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw std::invalid_argument("config: duplicate key '" + key + "'");
    it->set(config, value);
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace lmtp
