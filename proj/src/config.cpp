#include "selfgmad/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "selfgmad/ensemble.hpp"
#include "selfgmad/error.hpp"
#include "selfgmad/rng.hpp"

namespace selfgmad {

namespace {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> items;
  while (true) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) items.push_back(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return items;
}

template <class T>
T parse_integer(std::string_view key, std::string_view text) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("key " + std::string(key) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

double parse_real(std::string_view key, std::string_view text) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError("key " + std::string(key) + ": expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::string format_real(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, end);
}

template <class T, class Fmt>
std::string join(const std::vector<T>& items, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

struct Field {
  const char* name;
  bool hashed;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SG_SIZE(member)                                                                            \
  Field{#member, true, [](RunConfig& c, std::string_view v) { c.member = parse_integer<std::size_t>(#member, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define SG_INT(member)                                                                                    \
  Field{#member, true, [](RunConfig& c, std::string_view v) { c.member = parse_integer<int>(#member, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define SG_REAL(member)                                                                           \
  Field{#member, true, [](RunConfig& c, std::string_view v) { c.member = parse_real(#member, v); }, \
        [](const RunConfig& c) { return format_real(c.member); }}
#define SG_TEXT(member)                                                                    \
  Field{#member, true, [](RunConfig& c, std::string_view v) { c.member = std::string(v); }, \
        [](const RunConfig& c) { return c.member; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SG_SIZE(ablation_budget),
      Field{"budget", true,
            [](RunConfig& c, std::string_view v) {
              if (v == "none") {
                c.budget.reset();
              } else {
                c.budget = parse_integer<std::size_t>("budget", v);
              }
            },
            [](const RunConfig& c) { return c.budget ? std::to_string(*c.budget) : std::string("none"); }},
      SG_SIZE(batch_size),
      SG_REAL(case_threshold),
      Field{"criteria", true,
            [](RunConfig& c, std::string_view v) {
              c.criteria.clear();
              for (auto item : split_list(v)) {
                auto criterion = parse_criterion(item);
                if (!criterion) throw ConfigError("key criteria: unknown criterion '" + std::string(item) + "'");
                c.criteria.push_back(*criterion);
              }
            },
            [](const RunConfig& c) {
              return join(c.criteria, [](PruneCriterion p) { return std::string(criterion_name(p)); });
            }},
      SG_SIZE(dim),
      SG_SIZE(ensemble_size),
      SG_SIZE(ensembles),
      SG_REAL(forget_epsilon),
      Field{"hidden", true,
            [](RunConfig& c, std::string_view v) {
              c.hidden.clear();
              for (auto item : split_list(v)) c.hidden.push_back(parse_integer<std::size_t>("hidden", item));
            },
            [](const RunConfig& c) { return join(c.hidden, [](std::size_t w) { return std::to_string(w); }); }},
      SG_SIZE(k),
      Field{"labeling", true,
            [](RunConfig& c, std::string_view v) {
              c.labeling.clear();
              for (auto item : split_list(v)) {
                if (item == "oracle") {
                  c.labeling.push_back(LabelingBackend::Oracle);
                } else if (item == "live") {
                  c.labeling.push_back(LabelingBackend::Live);
                } else {
                  throw ConfigError("key labeling: expected oracle or live, got '" + std::string(item) + "'");
                }
              }
            },
            [](const RunConfig& c) {
              return join(c.labeling, [](LabelingBackend b) { return std::string(backend_name(b)); });
            }},
      Field{"level_bounds", true,
            [](RunConfig& c, std::string_view v) {
              c.level_bounds.clear();
              for (auto item : split_list(v)) c.level_bounds.push_back(parse_real("level_bounds", item));
            },
            [](const RunConfig& c) { return join(c.level_bounds, format_real); }},
      SG_TEXT(pool_bias),
      SG_SIZE(pool_size),
      SG_TEXT(probe_bias),
      SG_SIZE(probe_size),
      SG_INT(prune_finetune_epochs),
      SG_REAL(prune_finetune_lr),
      SG_REAL(rater_bias_sd),
      SG_REAL(rater_noise_max),
      SG_REAL(rater_noise_min),
      SG_REAL(rater_outlier_prob),
      Field{"ratios", true,
            [](RunConfig& c, std::string_view v) {
              c.ratios.clear();
              for (auto item : split_list(v)) c.ratios.push_back(parse_real("ratios", item));
            },
            [](const RunConfig& c) { return join(c.ratios, format_real); }},
      SG_INT(rectify_epochs),
      SG_REAL(rectify_lr),
      Field{"rounds", false, [](RunConfig& c, std::string_view v) { c.rounds = parse_integer<int>("rounds", v); },
            [](const RunConfig& c) { return std::to_string(c.rounds); }},
      Field{"seed", true, [](RunConfig& c, std::string_view v) { c.seed = parse_integer<std::uint64_t>("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      SG_INT(slimming_epochs),
      SG_REAL(slimming_l1),
      SG_REAL(srcc_floor),
      SG_SIZE(subjects),
      SG_SIZE(taylor_batch),
      SG_SIZE(tournament_pairs_per_level),
      SG_TEXT(train_bias),
      SG_INT(train_epochs),
      SG_REAL(train_lr),
      SG_SIZE(train_size),
      Field{"workers", false,
            [](RunConfig& c, std::string_view v) { c.workers = parse_integer<std::size_t>("workers", v); },
            [](const RunConfig& c) { return std::to_string(c.workers); }},
      Field{"world_seed", true,
            [](RunConfig& c, std::string_view v) { c.world_seed = parse_integer<std::uint64_t>("world_seed", v); },
            [](const RunConfig& c) { return std::to_string(c.world_seed); }},
  };
  return table;
}

#undef SG_SIZE
#undef SG_INT
#undef SG_REAL
#undef SG_TEXT

}  // namespace

std::string_view backend_name(LabelingBackend backend) {
  return backend == LabelingBackend::Oracle ? "oracle" : "live";
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& message) { throw ConfigError(message); };
  if (dim < kNumAttributes) fail("dim must be at least " + std::to_string(kNumAttributes));
  if (pool_size == 0 || train_size == 0 || probe_size == 0) fail("pool, train and probe sizes must be positive");
  if (hidden.empty() || std::find(hidden.begin(), hidden.end(), 0u) != hidden.end()) fail("hidden widths must be positive");
  if (!(train_lr > 0.0) || !(prune_finetune_lr > 0.0) || !(rectify_lr > 0.0)) fail("learning rates must be positive");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (train_epochs < 0 || prune_finetune_epochs < 0 || rectify_epochs < 0 || slimming_epochs < 0) {
    fail("epoch counts must be non-negative");
  }
  if (criteria.empty() || ratios.empty()) fail("criteria and ratios must be non-empty");
  for (double r : ratios) {
    if (!(r > 0.0 && r < 1.0)) fail("pruning ratios must lie in (0,1)");
  }
  const std::size_t m = criteria.size() * ratios.size();
  if (ensemble_size == 0 || ensemble_size > m) fail("ensemble_size must lie in [1, pool size]");
  if (ensembles == 0 || ensembles > binomial(m, ensemble_size)) fail("more ensembles requested than distinct subsets");
  if (k == 0) fail("k must be positive");
  if (level_bounds.size() < 2 || level_bounds.front() != 0.0 || level_bounds.back() != 100.0) {
    fail("level_bounds must start at 0 and end at 100");
  }
  for (std::size_t i = 1; i < level_bounds.size(); ++i) {
    if (!(level_bounds[i] > level_bounds[i - 1])) fail("level_bounds must increase");
  }
  if (rounds < 0) fail("rounds must be non-negative");
  if (labeling.empty()) fail("labeling needs at least one backend");
  if (subjects < 3) fail("at least 3 subjects are needed for screening");
  if (rater_noise_min < 0.0 || rater_noise_max < rater_noise_min) fail("bad rater noise range");
  if (rater_outlier_prob < 0.0 || rater_outlier_prob >= 1.0) fail("rater_outlier_prob must lie in [0,1)");
  if (case_threshold < 0.0) fail("case_threshold must be non-negative");
  if (forget_epsilon < 0.0) fail("forget_epsilon must be non-negative");
  try {
    (void)train_bias_spec();
    (void)pool_bias_spec();
    (void)probe_bias_spec();
  } catch (const std::exception& e) {
    fail(std::string("bias spec: ") + e.what());
  }
}

std::vector<QualityLevel> RunConfig::levels() const {
  static const char* kNames[] = {"bad", "poor", "fair", "good", "excellent"};
  const std::size_t count = level_bounds.size() - 1;
  std::vector<QualityLevel> out;
  for (std::size_t i = 0; i < count; ++i) {
    QualityLevel level;
    level.index = static_cast<int>(i);
    level.lo = level_bounds[i];
    level.hi = level_bounds[i + 1];
    level.label = count == 5 ? kNames[i] : "level" + std::to_string(i);
    level.closed_above = i + 1 == count;
    out.push_back(level);
  }
  return out;
}

std::vector<std::size_t> RunConfig::widths() const {
  std::vector<std::size_t> w{dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(1);
  return w;
}

LabelingBackend RunConfig::backend_for_round(int round) const {
  const std::size_t i = round <= 0 ? 0 : static_cast<std::size_t>(round - 1);
  return labeling[std::min(i, labeling.size() - 1)];
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.adam.learning_rate = train_lr;
  t.batch_size = batch_size;
  t.max_epochs = train_epochs;
  t.seed = derived_seed("f-train");
  return t;
}

PoolConfig RunConfig::pool_config() const {
  PoolConfig p;
  p.criteria = criteria;
  p.ratios = ratios;
  p.finetune.adam.learning_rate = prune_finetune_lr;
  p.finetune.max_epochs = prune_finetune_epochs;
  p.finetune.batch_size = batch_size;
  p.slimming_warmup.max_epochs = slimming_epochs;
  p.slimming_warmup.l1_scale_penalty = slimming_l1;
  p.slimming_warmup.batch_size = batch_size;
  p.taylor_batch = taylor_batch;
  p.srcc_floor = srcc_floor;
  p.seed = derived_seed("prune");
  p.workers = workers;
  return p;
}

PanelConfig RunConfig::panel_config() const {
  PanelConfig p;
  p.subjects = subjects;
  p.bias_sd = rater_bias_sd;
  p.noise_sd_min = rater_noise_min;
  p.noise_sd_max = rater_noise_max;
  p.outlier_prob = rater_outlier_prob;
  p.seed = derived_seed("panel");
  return p;
}

std::uint64_t RunConfig::derived_seed(std::string_view purpose) const { return mix_seed(seed, purpose); }

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& f : fields()) {
    if (!f.hashed) continue;
    out += f.name;
    out += " = ";
    out += f.get(*this);
    out += '\n';
  }
  return out;
}

std::string RunConfig::hash() const { return hex64(fnv1a(canonical())); }

RunConfig parse_config(std::string_view text, const std::string& origin) {
  RunConfig config;
  std::size_t line_no = 0;
  std::vector<std::string> seen;
  while (!text.empty()) {
    ++line_no;
    const auto newline = text.find('\n');
    std::string_view line = text.substr(0, newline);
    text.remove_prefix(newline == std::string_view::npos ? text.size() : newline + 1);
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) throw ConfigError(where + "key " + key + " set twice");
    seen.push_back(key);
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

}  // namespace selfgmad
