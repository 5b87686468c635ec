#include "selfgmad/gmad.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "selfgmad/error.hpp"
#include "selfgmad/parallel.hpp"
#include "selfgmad/rng.hpp"

namespace selfgmad {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ScoreMatrix

ScoreMatrix::ScoreMatrix(std::vector<std::string> model_ids, std::vector<std::string> sample_ids)
    : model_ids_(std::move(model_ids)),
      sample_ids_(std::move(sample_ids)),
      values_(model_ids_.size() * sample_ids_.size(), 0.0) {
  for (std::size_t m = 0; m < model_ids_.size(); ++m) {
    if (!model_lookup_.emplace(model_ids_[m], m).second) throw DataError("duplicate model id " + model_ids_[m]);
  }
  for (std::size_t s = 0; s < sample_ids_.size(); ++s) {
    if (!sample_lookup_.emplace(sample_ids_[s], s).second) throw DataError("duplicate sample id " + sample_ids_[s]);
  }
}

std::span<const double> ScoreMatrix::row(std::string_view model_id) const {
  const auto index = model_index(model_id);
  if (!index) throw DataError("score matrix has no model " + std::string(model_id));
  return row(*index);
}

std::optional<std::size_t> ScoreMatrix::model_index(std::string_view id) const {
  auto it = model_lookup_.find(std::string(id));
  if (it == model_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> ScoreMatrix::sample_index(std::string_view id) const {
  auto it = sample_lookup_.find(std::string(id));
  if (it == sample_lookup_.end()) return std::nullopt;
  return it->second;
}

void ScoreMatrix::validate() const {
  for (std::size_t m = 0; m < models(); ++m) {
    for (std::size_t s = 0; s < samples(); ++s) {
      if (!std::isfinite(at(m, s))) {
        throw DataError("non-finite score for model " + model_ids_[m] + " sample " + sample_ids_[s]);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Levels and selection

std::vector<QualityLevel> default_levels() {
  static const char* kLabels[] = {"bad", "poor", "fair", "good", "excellent"};
  std::vector<QualityLevel> levels;
  for (int i = 0; i < 5; ++i) levels.push_back({i, 20.0 * i, 20.0 * (i + 1), kLabels[i], i == 4});
  return levels;
}

std::string make_pair_id(int round, const std::string& attacker, const std::string& defender, int level,
                         const std::string& x_id, const std::string& y_id) {
  const std::string key = std::to_string(round) + '\x1f' + attacker + '\x1f' + defender + '\x1f' +
                          std::to_string(level) + '\x1f' + x_id + '\x1f' + y_id;
  return hex64(fnv1a(key));
}

double gmad_objective(std::span<const double> attacker, std::span<const double> defender, std::size_t x,
                      std::size_t y) {
  return (attacker[x] - attacker[y]) - (defender[x] - defender[y]);
}

ScoreMatrix build_score_matrix(std::span<const Model> models, std::span<const Sample> pool) {
  std::vector<std::string> model_ids, sample_ids;
  for (const auto& model : models) model_ids.push_back(model.id);
  for (const auto& sample : pool) sample_ids.push_back(sample.id);
  ScoreMatrix scores(std::move(model_ids), std::move(sample_ids));
  parallel_for(models.size(), [&](std::size_t m) {
    auto row = scores.row(m);
    for (std::size_t s = 0; s < pool.size(); ++s) row[s] = predict_mos(models[m], pool[s].features);
  });
  scores.validate();
  return scores;
}

std::vector<std::vector<std::size_t>> partition_levels(std::span<const double> defender,
                                                       std::span<const QualityLevel> levels) {
  std::vector<std::vector<std::size_t>> parts(levels.size());
  for (std::size_t s = 0; s < defender.size(); ++s) {
    bool placed = false;
    for (std::size_t l = 0; l < levels.size() && !placed; ++l) {
      if (levels[l].contains(defender[s])) {
        parts[l].push_back(s);
        placed = true;
      }
    }
    if (!placed) throw DataError("score " + std::to_string(defender[s]) + " falls outside every quality level");
  }
  return parts;
}

PairSelection select_pairs_among(const Contestant& defender, const Contestant& attacker,
                                 std::span<const std::string> sample_ids, std::span<const std::size_t> candidates,
                                 const QualityLevel& level, std::size_t k, int round) {
  PairSelection result;
  std::size_t wanted = k;
  if (candidates.size() < 2 * k) {
    wanted = candidates.size() / 2;
    result.warnings.push_back("level " + level.label + " holds " + std::to_string(candidates.size()) +
                              " samples for " + attacker.id + " vs " + defender.id + "; returning " +
                              std::to_string(wanted) + " of " + std::to_string(k) + " pairs");
  }
  if (wanted == 0) return result;

  auto diff = [&](std::size_t s) { return attacker.scores[s] - defender.scores[s]; };
  const std::size_t head = std::min(candidates.size(), 2 * wanted + 1);
  std::vector<std::size_t> high(candidates.begin(), candidates.end());
  std::vector<std::size_t> low = high;
  std::partial_sort(high.begin(), high.begin() + static_cast<std::ptrdiff_t>(head), high.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double da = diff(a), db = diff(b);
                      return da != db ? da > db : sample_ids[a] < sample_ids[b];
                    });
  std::partial_sort(low.begin(), low.begin() + static_cast<std::ptrdiff_t>(head), low.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double da = diff(a), db = diff(b);
                      return da != db ? da < db : sample_ids[a] < sample_ids[b];
                    });

  std::vector<std::size_t> used;
  auto is_used = [&](std::size_t s) { return std::find(used.begin(), used.end(), s) != used.end(); };
  std::size_t hi_pos = 0, lo_pos = 0;
  for (std::size_t r = 0; r < wanted; ++r) {
    while (is_used(high[hi_pos])) ++hi_pos;
    const std::size_t x = high[hi_pos];
    used.push_back(x);
    while (is_used(low[lo_pos])) ++lo_pos;
    const std::size_t y = low[lo_pos];
    used.push_back(y);

    GmadPair pair;
    pair.x_id = sample_ids[x];
    pair.y_id = sample_ids[y];
    pair.attacker = attacker.id;
    pair.defender = defender.id;
    pair.level = level.index;
    pair.k_rank = static_cast<int>(r + 1);
    // Same quantity as gmad_objective, evaluated as d(x) - d(y) so the sign is exact.
    pair.objective = diff(x) - diff(y);
    pair.round = round;
    pair.pair_id = make_pair_id(round, pair.attacker, pair.defender, pair.level, pair.x_id, pair.y_id);
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

PairSelection select_pairs(const Contestant& defender, const Contestant& attacker,
                           std::span<const std::string> sample_ids, const QualityLevel& level, std::size_t k,
                           int round, std::span<const std::uint8_t> excluded) {
  std::vector<std::size_t> candidates;
  for (std::size_t s = 0; s < sample_ids.size(); ++s) {
    if (!excluded.empty() && excluded[s]) continue;
    if (level.contains(defender.scores[s])) candidates.push_back(s);
  }
  return select_pairs_among(defender, attacker, sample_ids, candidates, level, k, round);
}

std::vector<GmadPair> apply_budget(std::span<const GmadPair> pairs, const std::string& target_id,
                                   std::size_t level_count, std::size_t budget) {
  if (budget >= pairs.size()) return {pairs.begin(), pairs.end()};
  const std::size_t strata = level_count * 2;
  auto stratum_of = [&](const GmadPair& pair) {
    return static_cast<std::size_t>(pair.level) * 2 + (pair.attacker == target_id ? 1 : 0);
  };
  auto better = [&](std::size_t a, std::size_t b) {
    return pairs[a].objective != pairs[b].objective ? pairs[a].objective > pairs[b].objective : a < b;
  };
  std::vector<std::vector<std::size_t>> members(strata);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::size_t stratum = stratum_of(pairs[i]);
    if (stratum >= strata) throw std::invalid_argument("pair level outside the configured levels");
    members[stratum].push_back(i);
  }
  std::vector<std::uint8_t> keep(pairs.size(), 0);
  std::size_t kept = 0;
  for (std::size_t s = 0; s < strata; ++s) {
    const std::size_t quota = budget / strata + (s < budget % strata ? 1 : 0);
    std::sort(members[s].begin(), members[s].end(), better);
    for (std::size_t r = 0; r < std::min(quota, members[s].size()); ++r) {
      keep[members[s][r]] = 1;
      ++kept;
    }
  }
  if (kept < budget) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (!keep[i]) rest.push_back(i);
    }
    std::sort(rest.begin(), rest.end(), better);
    for (std::size_t r = 0; r < budget - kept && r < rest.size(); ++r) keep[rest[r]] = 1;
  }
  std::vector<GmadPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (keep[i]) out.push_back(pairs[i]);
  }
  return out;
}

GmadSet assemble_gmad_set(const Contestant& target, const ScoreMatrix& competitors, const GmadSetConfig& config,
                          std::span<const std::uint8_t> excluded) {
  const auto& ids = competitors.sample_ids();
  if (target.scores.size() != ids.size()) throw std::invalid_argument("target scores do not match the sample axis");
  if (!excluded.empty() && excluded.size() != ids.size()) throw std::invalid_argument("exclusion mask size mismatch");

  auto admissible = [&](std::vector<std::vector<std::size_t>> parts) {
    if (excluded.empty()) return parts;
    for (auto& part : parts) std::erase_if(part, [&](std::size_t s) { return excluded[s] != 0; });
    return parts;
  };
  const auto target_levels = admissible(partition_levels(target.scores, config.levels));

  // Per competitor: [role 0: competitor attacks target][role 1: target attacks competitor]
  std::vector<std::vector<PairSelection>> selections(competitors.models());
  parallel_for(competitors.models(), [&](std::size_t i) {
    const Contestant competitor{competitors.model_ids()[i], competitors.row(i)};
    const auto competitor_levels = admissible(partition_levels(competitor.scores, config.levels));
    auto& out = selections[i];
    for (std::size_t l = 0; l < config.levels.size(); ++l) {
      out.push_back(select_pairs_among(target, competitor, ids, target_levels[l], config.levels[l], config.k,
                                       config.round));
      out.push_back(select_pairs_among(competitor, target, ids, competitor_levels[l], config.levels[l], config.k,
                                       config.round));
    }
  });

  GmadSet set;
  std::map<std::pair<std::string, std::string>, std::string> seen;
  for (const auto& per_competitor : selections) {
    for (const auto& selection : per_competitor) {
      set.warnings.insert(set.warnings.end(), selection.warnings.begin(), selection.warnings.end());
      for (const auto& pair : selection.pairs) {
        ++set.selected_before_dedup;
        auto key = std::minmax(pair.x_id, pair.y_id);
        auto [it, inserted] = seen.emplace(std::make_pair(key.first, key.second), pair.pair_id);
        if (inserted) {
          set.pairs.push_back(pair);
        } else {
          set.duplicates.push_back({it->second, pair.pair_id});
        }
      }
    }
  }
  if (config.budget) set.pairs = apply_budget(set.pairs, target.id, config.levels.size(), *config.budget);
  return set;
}

// ---------------------------------------------------------------------------
// pairs.jsonl

void write_pairs(const std::filesystem::path& path, std::span<const GmadPair> pairs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : pairs) {
    json record = {{"pair_id", p.pair_id},   {"x_id", p.x_id},     {"y_id", p.y_id},
                   {"attacker", p.attacker}, {"defender", p.defender}, {"level", p.level},
                   {"k_rank", p.k_rank},     {"objective", p.objective}, {"round", p.round}};
    out << record.dump() << '\n';
  }
}

std::vector<GmadPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<GmadPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json r = json::parse(line);
      GmadPair p;
      p.pair_id = r.at("pair_id").get<std::string>();
      p.x_id = r.at("x_id").get<std::string>();
      p.y_id = r.at("y_id").get<std::string>();
      p.attacker = r.at("attacker").get<std::string>();
      p.defender = r.at("defender").get<std::string>();
      p.level = r.at("level").get<int>();
      p.k_rank = r.at("k_rank").get<int>();
      p.objective = r.at("objective").get<double>();
      p.round = r.at("round").get<int>();
      if (p.x_id == p.y_id) throw DataError("pair with identical images");
      pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace selfgmad
