#include "selfgmad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "selfgmad/error.hpp"

namespace selfgmad {

using nlohmann::json;

namespace {

void check_inputs(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("correlation inputs differ in length");
  if (a.size() < 2) throw std::invalid_argument("correlation needs at least two points");
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("correlation of a constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> standardize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (sd <= 1e-15) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
  return out;
}

std::string fixed(double value, int digits = 4) {
  if (!std::isfinite(value)) return "n/a";
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", digits, value);
  return buffer;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path, std::ios::binary);
  if (!in) return rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double number_or_nan(const json& node, const char* key) {
  if (!node.is_object() || !node.contains(key) || !node.at(key).is_number()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return node.at(key).get<double>();
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 1);  // mean of 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double srcc(std::span<const double> pred, std::span<const double> mos) {
  check_inputs(pred, mos);
  const auto rp = average_ranks(pred);
  const auto rm = average_ranks(mos);
  return pearson(rp, rm);
}

double plcc(std::span<const double> pred, std::span<const double> mos) {
  check_inputs(pred, mos);
  return pearson(pred, mos);
}

TournamentResult tournament_pairs(const ScoreMatrix& scores, const TournamentConfig& config,
                                  std::span<const std::uint8_t> excluded) {
  TournamentResult result;
  result.model_ids = scores.model_ids();
  const std::size_t first_role_k = (config.pairs_per_level + 1) / 2;
  const std::size_t second_role_k = config.pairs_per_level / 2;
  for (std::size_t a = 0; a < scores.models(); ++a) {
    for (std::size_t b = a + 1; b < scores.models(); ++b) {
      ++result.competitions;
      const Contestant ca{scores.model_ids()[a], scores.row(a)};
      const Contestant cb{scores.model_ids()[b], scores.row(b)};
      for (const auto& level : config.levels) {
        // a defends against b, then b defends against a
        for (int role = 0; role < 2; ++role) {
          const Contestant& defender = role == 0 ? ca : cb;
          const Contestant& attacker = role == 0 ? cb : ca;
          const std::size_t k = role == 0 ? first_role_k : second_role_k;
          if (k == 0) continue;
          auto sel = select_pairs(defender, attacker, scores.sample_ids(), level, k, config.round, excluded);
          for (auto& p : sel.pairs) result.pairs.push_back(std::move(p));
          for (auto& w : sel.warnings) result.warnings.push_back(std::move(w));
        }
      }
    }
  }
  return result;
}

void attach_mos(TournamentResult& result, const LabeledSet& labels) {
  result.rated.clear();
  for (const auto& p : result.pairs) {
    auto x = labels.entries.find(p.x_id);
    auto y = labels.entries.find(p.y_id);
    if (x == labels.entries.end() || y == labels.entries.end()) continue;
    result.rated.push_back({p, x->second.mos, y->second.mos});
  }
}

RankingResult global_ranking(std::span<const RatedPair> rated, const std::vector<std::string>& model_ids) {
  const std::size_t n = model_ids.size();
  auto index_of = [&](const std::string& id) {
    auto it = std::find(model_ids.begin(), model_ids.end(), id);
    if (it == model_ids.end()) throw DataError("rated pair names unknown model " + id);
    return static_cast<std::size_t>(it - model_ids.begin());
  };
  std::vector<double> attack_sum(n, 0.0), defend_sum(n, 0.0);
  std::vector<std::size_t> attack_count(n, 0), defend_count(n, 0);
  std::vector<std::vector<double>> gap_sum(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<std::size_t>> gap_count(n, std::vector<std::size_t>(n, 0));
  for (const auto& r : rated) {
    const std::size_t a = index_of(r.pair.attacker);
    const std::size_t d = index_of(r.pair.defender);
    const double gap = (r.mos_x - r.mos_y) / 100.0;
    attack_sum[a] += gap;
    ++attack_count[a];
    defend_sum[d] -= gap;
    ++defend_count[d];
    gap_sum[a][d] += gap;
    ++gap_count[a][d];
  }
  RankingResult out;
  out.model_ids = model_ids;
  out.raw_aggressiveness.resize(n, 0.0);
  out.raw_resistance.resize(n, 0.0);
  out.gap_matrix.assign(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t i = 0; i < n; ++i) {
    if (attack_count[i]) out.raw_aggressiveness[i] = attack_sum[i] / static_cast<double>(attack_count[i]);
    if (defend_count[i]) out.raw_resistance[i] = defend_sum[i] / static_cast<double>(defend_count[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && gap_count[i][j]) out.gap_matrix[i][j] = gap_sum[i][j] / static_cast<double>(gap_count[i][j]);
    }
  }
  out.aggressiveness = standardize(out.raw_aggressiveness);
  out.resistance = standardize(out.raw_resistance);
  return out;
}

void write_rankings_csv(const std::filesystem::path& path, const RankingResult& ranking) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "model_id,aggressiveness,resistance,raw_aggressiveness,raw_resistance\n";
  for (std::size_t i = 0; i < ranking.model_ids.size(); ++i) {
    out << ranking.model_ids[i] << ',' << fixed(ranking.aggressiveness[i], 6) << ',' << fixed(ranking.resistance[i], 6)
        << ',' << fixed(ranking.raw_aggressiveness[i], 6) << ',' << fixed(ranking.raw_resistance[i], 6) << '\n';
  }
}

std::string build_report(const std::filesystem::path& run_dir) {
  std::vector<std::pair<int, json>> rounds;
  const auto rounds_dir = run_dir / "rounds";
  if (std::filesystem::is_directory(rounds_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(rounds_dir)) {
      const auto metrics_path = entry.path() / "metrics.json";
      if (!std::filesystem::is_regular_file(metrics_path)) continue;
      std::ifstream in(metrics_path, std::ios::binary);
      json metrics;
      try {
        metrics = json::parse(in);
      } catch (const std::exception& e) {
        throw DataError(metrics_path.string() + ": " + e.what());
      }
      rounds.emplace_back(metrics.value("round", 0), std::move(metrics));
    }
  }
  std::sort(rounds.begin(), rounds.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::ostringstream md;
  md << "# Troubleshooting report\n\n";

  md << "## Probe correlation\n\n";
  md << "| round | model | SRCC | PLCC | SRCC on D |\n|---|---|---|---|---|\n";
  for (const auto& [t, m] : rounds) {
    const json probe = m.value("probe", json::object());
    md << "| " << t << " | " << m.value("target", std::string("f")) << " | " << fixed(number_or_nan(probe, "srcc"))
       << " | " << fixed(number_or_nan(probe, "plcc")) << " | " << fixed(number_or_nan(m, "train_srcc")) << " |\n";
  }

  md << "\n## gMAD rounds\n\n";
  md << "| round | selected | pairs | labeled images | removal rate | SRCC on L before | SRCC on L after |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const auto& [t, m] : rounds) {
    if (!m.contains("gmad")) continue;
    const json& g = m.at("gmad");
    const json rect = m.value("rectification", json::object());
    md << "| " << t << " | " << g.value("selected", 0) << " | " << g.value("pairs", 0) << " | "
       << g.value("labeled_images", 0) << " | " << fixed(number_or_nan(g, "removal_rate")) << " | "
       << fixed(number_or_nan(rect, "srcc_on_L_before")) << " | " << fixed(number_or_nan(rect, "srcc_on_L_after"))
       << " |\n";
  }

  md << "\n## Case distribution\n\n";
  md << "| round | attacker | I | II | III | IV | target failure rate |\n|---|---|---|---|---|---|---|\n";
  for (const auto& [t, m] : rounds) {
    if (!m.contains("cases")) continue;
    const json& cases = m.at("cases");
    for (const char* role : {"competitor_attacks", "target_attacks"}) {
      if (!cases.contains(role)) continue;
      const json& c = cases.at(role);
      md << "| " << t << " | " << (std::string(role) == "competitor_attacks" ? "ensemble" : "target") << " | "
         << c.value("I", 0) << " | " << c.value("II", 0) << " | " << c.value("III", 0) << " | " << c.value("IV", 0)
         << " | " << fixed(number_or_nan(c, "failure_rate")) << " |\n";
    }
  }

  md << "\n## Global ranking\n\n";
  md << "| model | aggressiveness | resistance |\n|---|---|---|\n";
  const auto rankings = read_csv(run_dir / "rankings.csv");
  for (std::size_t i = 1; i < rankings.size(); ++i) {
    if (rankings[i].size() < 3) throw DataError("rankings.csv row " + std::to_string(i + 1) + " is short");
    md << "| " << rankings[i][0] << " | " << rankings[i][1] << " | " << rankings[i][2] << " |\n";
  }

  md << "\n## Failure spotting\n\n";
  md << "| selector | budget | SRCC | PLCC |\n|---|---|---|---|\n";
  const auto ablation = read_csv(run_dir / "ablation.csv");
  for (std::size_t i = 1; i < ablation.size(); ++i) {
    if (ablation[i].size() < 4) throw DataError("ablation.csv row " + std::to_string(i + 1) + " is short");
    md << "| " << ablation[i][0] << " | " << ablation[i][3] << " | " << ablation[i][1] << " | " << ablation[i][2]
       << " |\n";
  }
  return md.str();
}

}  // namespace selfgmad
