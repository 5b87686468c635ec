#include "selfgmad/al_baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "selfgmad/error.hpp"
#include "selfgmad/evaluation.hpp"
#include "selfgmad/parallel.hpp"
#include "selfgmad/rng.hpp"

namespace selfgmad {

namespace {

double correlation_or_nan(double (*fn)(std::span<const double>, std::span<const double>), std::span<const double> a,
                          std::span<const double> b) {
  try {
    return fn(a, b);
  } catch (const std::invalid_argument&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Column-wise z-scores appended to `out` (count x dim, row-major input).
void append_standardized(std::vector<double>& out, std::size_t out_dim, std::size_t offset,
                         std::span<const double> values, std::size_t dim) {
  const std::size_t count = dim ? values.size() / dim : 0;
  for (std::size_t c = 0; c < dim; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) mean += values[i * dim + c];
    mean /= static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i = 0; i < count; ++i) ss += (values[i * dim + c] - mean) * (values[i * dim + c] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    const double inv = sd > 0.0 ? 1.0 / sd : 0.0;
    for (std::size_t i = 0; i < count; ++i) out[i * out_dim + offset + c] = (values[i * dim + c] - mean) * inv;
  }
}

std::string format_number(double value) {
  if (!std::isfinite(value)) return "nan";
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

}  // namespace

std::vector<std::string> select_random(std::span<const std::string> ids, std::size_t budget, std::uint64_t seed) {
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  Rng rng(mix_seed(seed, "random-selector"));
  shuffle(sorted, rng);
  sorted.resize(std::min(budget, sorted.size()));
  return sorted;
}

std::vector<std::string> top_by_score(std::span<const std::string> ids, std::span<const double> scores,
                                      std::size_t budget) {
  if (ids.size() != scores.size()) throw std::invalid_argument("ids and scores differ in length");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(budget, ids.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(ids[order[i]]);
  return out;
}

std::vector<double> qbc_scores(const ScoreMatrix& committee) {
  std::vector<double> out(committee.samples(), 0.0);
  const double m = static_cast<double>(committee.models());
  if (committee.models() == 0) return out;
  for (std::size_t s = 0; s < committee.samples(); ++s) {
    double mean = 0.0;
    for (std::size_t j = 0; j < committee.models(); ++j) mean += committee.at(j, s);
    mean /= m;
    double ss = 0.0;
    for (std::size_t j = 0; j < committee.models(); ++j) ss += (committee.at(j, s) - mean) * (committee.at(j, s) - mean);
    out[s] = ss / m;
  }
  return out;
}

std::vector<std::string> select_qbc(const ScoreMatrix& committee, std::size_t budget) {
  return top_by_score(committee.sample_ids(), qbc_scores(committee), budget);
}

std::vector<double> emcm_scores(const Model& f, const ScoreMatrix& committee, std::span<const Sample> pool) {
  if (committee.samples() != pool.size()) throw DataError("committee scores do not cover the pool");
  std::vector<double> out(pool.size(), 0.0);
  parallel_for(pool.size(), [&](std::size_t s) {
    const double fx = predict_mos(f, pool[s].features);
    double deviation = 0.0;
    for (std::size_t j = 0; j < committee.models(); ++j) deviation += std::abs(fx - committee.at(j, s));
    if (committee.models()) deviation /= static_cast<double>(committee.models());
    if (deviation == 0.0) return;
    const auto grad = output_gradient(f, pool[s].features);
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    out[s] = deviation * std::sqrt(norm);
  });
  return out;
}

std::vector<std::string> select_emcm(const Model& f, const ScoreMatrix& committee, std::span<const Sample> pool,
                                     std::size_t budget) {
  return top_by_score(committee.sample_ids(), emcm_scores(f, committee, pool), budget);
}

Model train_residual_model(const Model& f, std::span<const Example> labeled, const RsalConfig& config) {
  std::vector<std::size_t> widths = f.widths();
  for (std::size_t i = 1; i + 1 < widths.size(); ++i) widths[i] = std::max<std::size_t>(1, widths[i] / 2);
  Model aux = init_model(widths, config.seed, f.id + "-residual");
  // Residuals live near zero; start the head there.
  aux.out_shift = 0.0;
  aux.out_gain = 25.0;
  std::vector<Example> residuals;
  residuals.reserve(labeled.size());
  for (const auto& e : labeled) residuals.push_back({e.x, std::abs(predict_mos(f, e.x) - e.y)});
  TrainConfig cfg = config.train;
  cfg.seed = mix_seed(config.seed, "rsal-train");
  return train(std::move(aux), residuals, cfg).model;
}

std::vector<std::string> select_rsal(const Model& f, std::span<const Example> labeled, std::span<const Sample> pool,
                                     std::size_t budget, const RsalConfig& config) {
  const Model aux = train_residual_model(f, labeled, config);
  std::vector<std::string> ids;
  std::vector<double> predicted(pool.size());
  ids.reserve(pool.size());
  for (const auto& s : pool) ids.push_back(s.id);
  parallel_for(pool.size(), [&](std::size_t i) { predicted[i] = forward(aux, pool[i].features); });
  return top_by_score(ids, predicted, budget);
}

std::string_view gs_space_name(GsSpace space) {
  switch (space) {
    case GsSpace::Input: return "input";
    case GsSpace::Output: return "output";
    case GsSpace::Joint: return "joint";
  }
  return "joint";
}

GsSpace parse_gs_space(std::string_view name) {
  if (name == "input") return GsSpace::Input;
  if (name == "output") return GsSpace::Output;
  if (name == "joint") return GsSpace::Joint;
  throw std::invalid_argument("unknown greedy-sampling space " + std::string(name));
}

std::vector<std::size_t> greedy_max_min(std::span<const double> points, std::size_t dim,
                                        std::span<const std::string> ids, std::size_t budget) {
  const std::size_t count = ids.size();
  if (dim == 0 || points.size() != count * dim) throw std::invalid_argument("point matrix does not match ids");
  std::vector<std::size_t> chosen;
  if (count == 0 || budget == 0) return chosen;
  auto dist2 = [&](std::size_t a, std::span<const double> c) {
    double d = 0.0;
    for (std::size_t k = 0; k < dim; ++k) d += (points[a * dim + k] - c[k]) * (points[a * dim + k] - c[k]);
    return d;
  };
  std::vector<double> centroid(dim, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < dim; ++k) centroid[k] += points[i * dim + k];
  for (double& c : centroid) c /= static_cast<double>(count);

  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    const double d = dist2(i, centroid);
    if (d < best || (d == best && ids[i] < ids[first])) {
      best = d;
      first = i;
    }
  }
  std::vector<double> nearest(count, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> taken(count, 0);
  std::size_t current = first;
  const std::size_t take = std::min(budget, count);
  while (true) {
    chosen.push_back(current);
    taken[current] = 1;
    if (chosen.size() == take) break;
    const std::span<const double> c(points.data() + current * dim, dim);
    for (std::size_t i = 0; i < count; ++i) nearest[i] = std::min(nearest[i], dist2(i, c));
    std::size_t next = count;
    for (std::size_t i = 0; i < count; ++i) {
      if (taken[i]) continue;
      if (next == count || nearest[i] > nearest[next] || (nearest[i] == nearest[next] && ids[i] < ids[next])) next = i;
    }
    current = next;
  }
  return chosen;
}

std::vector<std::string> select_gs(std::span<const Sample> pool, std::span<const double> outputs, std::size_t budget,
                                   GsSpace space) {
  if (space != GsSpace::Input && outputs.size() != pool.size()) throw DataError("outputs do not cover the pool");
  const std::size_t feature_dim = pool.empty() ? 0 : pool.front().features.size();
  const std::size_t in_dim = space == GsSpace::Output ? 0 : feature_dim;
  const std::size_t out_dim = space == GsSpace::Input ? 0 : 1;
  const std::size_t dim = in_dim + out_dim;
  std::vector<double> points(pool.size() * dim, 0.0);
  if (in_dim) {
    std::vector<double> raw;
    raw.reserve(pool.size() * feature_dim);
    for (const auto& s : pool) raw.insert(raw.end(), s.features.begin(), s.features.end());
    append_standardized(points, dim, 0, raw, feature_dim);
  }
  if (out_dim) append_standardized(points, dim, in_dim, outputs, 1);
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& s : pool) ids.push_back(s.id);
  std::vector<std::string> out;
  for (auto i : greedy_max_min(points, dim, ids, budget)) out.push_back(ids[i]);
  return out;
}

std::vector<std::string> gmad_sample_ids(std::span<const GmadPair> pairs, std::size_t budget) {
  std::vector<const GmadPair*> order;
  for (const auto& p : pairs) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const GmadPair* a, const GmadPair* b) {
    if (a->objective != b->objective) return a->objective > b->objective;
    return a->pair_id < b->pair_id;
  });
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto* p : order) {
    for (const auto* id : {&p->x_id, &p->y_id}) {
      if (out.size() >= budget) return out;
      if (seen.insert(*id).second) out.push_back(*id);
    }
  }
  return out;
}

SpottingRow spotting_row(const std::string& selector, std::span<const std::string> ids,
                         std::span<const double> scores, std::span<const double> mos,
                         std::span<const std::string> selected, std::uint64_t seed) {
  if (ids.size() != scores.size() || ids.size() != mos.size()) throw std::invalid_argument("misaligned inputs");
  std::unordered_map<std::string_view, std::size_t> lookup;
  for (std::size_t i = 0; i < ids.size(); ++i) lookup.emplace(ids[i], i);
  std::vector<double> sub_scores, sub_mos;
  for (const auto& id : selected) {
    auto it = lookup.find(id);
    if (it == lookup.end()) throw DataError("selected id " + id + " is not in the pool");
    sub_scores.push_back(scores[it->second]);
    sub_mos.push_back(mos[it->second]);
  }
  SpottingRow row;
  row.selector = selector;
  row.srcc = correlation_or_nan(&srcc, sub_scores, sub_mos);
  row.plcc = correlation_or_nan(&plcc, sub_scores, sub_mos);
  row.budget = selected.size();
  row.seed = seed;
  return row;
}

std::vector<SpottingRow> benchmark_spotting(const SpottingInputs& in) {
  if (!in.f || !in.committee) throw std::invalid_argument("benchmark_spotting needs f and a committee");
  if (in.mos.size() != in.pool.size()) throw DataError("reference MOS does not cover the pool");
  std::vector<std::string> ids;
  ids.reserve(in.pool.size());
  for (const auto& s : in.pool) ids.push_back(s.id);
  const std::vector<double> scores = predict_mos(*in.f, in.pool);

  std::vector<std::pair<std::string, std::vector<std::string>>> selections;
  selections.emplace_back("random", select_random(ids, in.budget, in.seed));
  selections.emplace_back("qbc", select_qbc(*in.committee, in.budget));
  selections.emplace_back("emcm", select_emcm(*in.f, *in.committee, in.pool, in.budget));
  RsalConfig rsal = in.rsal;
  rsal.seed = mix_seed(in.seed, rsal.seed);
  selections.emplace_back("rsal", select_rsal(*in.f, in.labeled, in.pool, in.budget, rsal));
  selections.emplace_back("gs", select_gs(in.pool, scores, in.budget, GsSpace::Joint));
  selections.emplace_back("gmad", gmad_sample_ids(in.gmad_pairs, in.budget));
  selections.emplace_back("all", ids);

  std::vector<SpottingRow> rows;
  for (const auto& [name, selected] : selections) rows.push_back(spotting_row(name, ids, scores, in.mos, selected, in.seed));
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const SpottingRow> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "selector,srcc,plcc,budget,seed\n";
  for (const auto& r : rows) {
    out << r.selector << ',' << format_number(r.srcc) << ',' << format_number(r.plcc) << ',' << r.budget << ','
        << r.seed << '\n';
  }
}

std::vector<SpottingRow> load_ablation_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<SpottingRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
    try {
      SpottingRow r;
      r.selector = cells[0];
      r.srcc = cells[1] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[1]);
      r.plcc = cells[2] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[2]);
      r.budget = std::stoul(cells[3]);
      r.seed = std::stoull(cells[4]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace selfgmad
