#include "selfgmad/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "selfgmad/error.hpp"
#include "selfgmad/evaluation.hpp"
#include "selfgmad/parallel.hpp"

namespace selfgmad {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> unit_row(const Layer& layer, std::size_t unit) {
  std::vector<double> row(layer.in);
  for (std::size_t i = 0; i < layer.in; ++i) row[i] = layer.live(unit, i) ? layer.w(unit, i) : 0.0;
  return row;
}

double norm2(std::span<const double> v) {
  double total = 0.0;
  for (double x : v) total += x * x;
  return std::sqrt(total);
}

std::size_t parameter_offset_of_scale(const Model& model, std::size_t layer) {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    const Layer& prior = model.layers[l];
    offset += prior.out * prior.in + prior.out + prior.in;
  }
  const Layer& current = model.layers[layer];
  return offset + current.out * current.in + current.out;
}

std::string ratio_tag(double ratio) {
  std::ostringstream out;
  out << static_cast<int>(std::lround(ratio * 100.0));
  return out.str();
}

Model prune_weights(Model model, double ratio) {
  struct Entry {
    double magnitude;
    std::size_t layer;
    std::size_t index;
  };
  std::vector<Entry> entries;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    for (std::size_t k = 0; k < layer.weight.size(); ++k) {
      if (layer.weight_mask[k]) entries.push_back({std::abs(layer.weight[k]), l, k});
    }
  }
  const auto budget = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(entries.size())));
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(budget), entries.end(),
                    [](const Entry& a, const Entry& b) {
                      return std::tie(a.magnitude, a.layer, a.index) < std::tie(b.magnitude, b.layer, b.index);
                    });
  for (std::size_t k = 0; k < budget; ++k) {
    model.layers[entries[k].layer].weight_mask[entries[k].index] = 0;
  }
  enforce_constraints(model);
  return model;
}

}  // namespace

std::string_view criterion_name(PruneCriterion criterion) {
  switch (criterion) {
    case PruneCriterion::OMP: return "OMP";
    case PruneCriterion::L1Filter: return "L1Filter";
    case PruneCriterion::L2Filter: return "L2Filter";
    case PruneCriterion::TaylorFO: return "TaylorFO";
    case PruneCriterion::Slimming: return "Slimming";
    case PruneCriterion::FPGM: return "FPGM";
  }
  return "unknown";
}

std::optional<PruneCriterion> parse_criterion(std::string_view name) {
  for (auto criterion : kAllCriteria) {
    if (criterion_name(criterion) == name) return criterion;
  }
  return std::nullopt;
}

Granularity granularity_of(PruneCriterion criterion) {
  return criterion == PruneCriterion::OMP ? Granularity::Weight : Granularity::Unit;
}

void PruneSpec::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("prune ratio must lie strictly between 0 and 1");
  if (criterion == PruneCriterion::TaylorFO && batch.empty()) {
    throw std::invalid_argument("TaylorFO pruning needs a labeled data batch");
  }
}

void mask_unit(Model& model, std::size_t layer, std::size_t unit) {
  if (layer + 1 >= model.layers.size()) throw std::invalid_argument("the output layer is never pruned");
  Layer& current = model.layers[layer];
  Layer& next = model.layers[layer + 1];
  current.unit_mask[unit] = 0;
  for (std::size_t i = 0; i < current.in; ++i) current.weight_mask[unit * current.in + i] = 0;
  for (std::size_t j = 0; j < next.out; ++j) next.weight_mask[j * next.in + unit] = 0;
}

std::vector<std::vector<double>> unit_scores(const Model& model, const PruneSpec& spec) {
  if (granularity_of(spec.criterion) != Granularity::Unit) {
    throw std::invalid_argument("unit scores are undefined for weight-granularity criteria");
  }
  const std::size_t hidden = model.layers.size() - 1;
  std::vector<std::vector<double>> scores(hidden);
  for (std::size_t l = 0; l < hidden; ++l) scores[l].assign(model.layers[l].out, 0.0);

  if (spec.criterion == PruneCriterion::TaylorFO) {
    // (scale * d loss_s / d scale)^2 averaged over the batch, loss_s = (raw - y)^2
    for (const auto& example : spec.batch) {
      const double residual = forward(model, example.x) - example.y;
      const auto grad = output_gradient(model, example.x);
      for (std::size_t l = 0; l < hidden; ++l) {
        const Layer& next = model.layers[l + 1];
        const std::size_t offset = parameter_offset_of_scale(model, l + 1);
        for (std::size_t j = 0; j < next.in; ++j) {
          const double contribution = next.scale[j] * 2.0 * residual * grad[offset + j];
          scores[l][j] += contribution * contribution;
        }
      }
    }
    for (auto& layer_scores : scores) {
      for (auto& s : layer_scores) s /= static_cast<double>(spec.batch.size());
    }
  } else {
    for (std::size_t l = 0; l < hidden; ++l) {
      const Layer& layer = model.layers[l];
      switch (spec.criterion) {
        case PruneCriterion::L1Filter:
          for (std::size_t j = 0; j < layer.out; ++j) {
            for (double w : unit_row(layer, j)) scores[l][j] += std::abs(w);
          }
          break;
        case PruneCriterion::L2Filter:
          for (std::size_t j = 0; j < layer.out; ++j) scores[l][j] = norm2(unit_row(layer, j));
          break;
        case PruneCriterion::Slimming:
          for (std::size_t j = 0; j < layer.out; ++j) scores[l][j] = std::abs(model.layers[l + 1].scale[j]);
          break;
        case PruneCriterion::FPGM: {
          std::vector<std::vector<double>> rows;
          for (std::size_t j = 0; j < layer.out; ++j) {
            if (layer.unit_mask[j]) rows.push_back(unit_row(layer, j));
          }
          if (rows.empty()) break;
          const auto median = geometric_median(rows);
          for (std::size_t j = 0; j < layer.out; ++j) {
            auto row = unit_row(layer, j);
            for (std::size_t i = 0; i < row.size(); ++i) row[i] -= median[i];
            scores[l][j] = norm2(row);
          }
          break;
        }
        default: break;
      }
    }
  }
  for (std::size_t l = 0; l < hidden; ++l) {
    for (std::size_t j = 0; j < model.layers[l].out; ++j) {
      if (!model.layers[l].unit_mask[j]) scores[l][j] = kInf;
    }
  }
  return scores;
}

Model prune(const Model& model, const PruneSpec& spec) {
  spec.validate();
  if (model.layers.size() < 1) throw std::invalid_argument("empty model");
  Model pruned;
  if (granularity_of(spec.criterion) == Granularity::Weight) {
    pruned = prune_weights(model, spec.ratio);
  } else {
    pruned = model;
    const auto scores = unit_scores(model, spec);
    for (std::size_t l = 0; l < scores.size(); ++l) {
      const Layer& layer = model.layers[l];
      std::vector<std::size_t> live;
      for (std::size_t j = 0; j < layer.out; ++j) {
        if (layer.unit_mask[j]) live.push_back(j);
      }
      if (live.empty()) continue;
      std::size_t budget = static_cast<std::size_t>(std::floor(spec.ratio * static_cast<double>(live.size())));
      budget = std::min(budget, live.size() - 1);
      std::stable_sort(live.begin(), live.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(scores[l][a], a) < std::tie(scores[l][b], b);
      });
      for (std::size_t k = 0; k < budget; ++k) mask_unit(pruned, l, live[k]);
    }
    enforce_constraints(pruned);
  }
  pruned.lineage = {model.id, std::string(criterion_name(spec.criterion)), spec.ratio, model.lineage.round};
  pruned.id = model.id + "-" + std::string(criterion_name(spec.criterion)) + ratio_tag(spec.ratio);
  return pruned;
}

std::size_t masked_prunable_weights(const Model& model) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    for (auto m : model.layers[l].weight_mask) count += m == 0;
  }
  return count;
}

std::size_t prunable_weights(const Model& model) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) count += model.layers[l].weight.size();
  return count;
}

std::vector<std::size_t> masked_units(const Model& model) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    const auto& mask = model.layers[l].unit_mask;
    out.push_back(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 0)));
  }
  return out;
}

double sum_of_distances(std::span<const std::vector<double>> points, std::span<const double> center) {
  double total = 0.0;
  for (const auto& p : points) {
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += (p[i] - center[i]) * (p[i] - center[i]);
    total += std::sqrt(d);
  }
  return total;
}

std::vector<double> geometric_median(std::span<const std::vector<double>> points, double tol, int max_iterations) {
  if (points.empty()) throw std::invalid_argument("geometric median of an empty set");
  const std::size_t dim = points.front().size();
  std::vector<double> y(dim, 0.0);
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("points differ in dimension");
    for (std::size_t i = 0; i < dim; ++i) y[i] += p[i];
  }
  for (auto& v : y) v /= static_cast<double>(points.size());

  double scale = 0.0;
  for (const auto& p : points) {
    double d = 0.0;
    for (std::size_t i = 0; i < dim; ++i) d += (p[i] - y[i]) * (p[i] - y[i]);
    scale = std::max(scale, std::sqrt(d));
  }
  if (scale == 0.0) return y;
  const double coincide = 1e-14 * scale;

  std::vector<double> weighted(dim), pull(dim), next(dim);
  for (int iter = 0; iter < max_iterations; ++iter) {
    std::fill(weighted.begin(), weighted.end(), 0.0);
    std::fill(pull.begin(), pull.end(), 0.0);
    double inverse_total = 0.0;
    double coincident = 0.0;
    for (const auto& p : points) {
      double d = 0.0;
      for (std::size_t i = 0; i < dim; ++i) d += (p[i] - y[i]) * (p[i] - y[i]);
      d = std::sqrt(d);
      if (d <= coincide) {
        coincident += 1.0;
        continue;
      }
      inverse_total += 1.0 / d;
      for (std::size_t i = 0; i < dim; ++i) {
        weighted[i] += p[i] / d;
        pull[i] += (p[i] - y[i]) / d;
      }
    }
    if (inverse_total == 0.0) return y;
    for (std::size_t i = 0; i < dim; ++i) next[i] = weighted[i] / inverse_total;
    if (coincident > 0.0) {
      // Vardi-Zhang: y sits on data points; it is optimal iff the pull of the
      // remaining points does not exceed their multiplicity.
      const double strength = norm2(pull);
      if (strength <= coincident) return y;
      const double keep = coincident / strength;
      for (std::size_t i = 0; i < dim; ++i) next[i] = (1.0 - keep) * next[i] + keep * y[i];
    }
    double step = 0.0;
    for (std::size_t i = 0; i < dim; ++i) step += (next[i] - y[i]) * (next[i] - y[i]);
    y.swap(next);
    if (std::sqrt(step) <= tol * scale) break;
  }
  return y;
}

PoolConfig::PoolConfig() {
  finetune.max_epochs = 15;
  finetune.adam.learning_rate = 1e-3;
  slimming_warmup.max_epochs = 3;
  slimming_warmup.adam.learning_rate = 1e-3;
  slimming_warmup.l1_scale_penalty = 1e-3;
}

PrunedPool build_pruned_pool(const Model& f, std::span<const Example> train_set, const PoolConfig& config) {
  if (train_set.empty()) throw std::invalid_argument("pruned pool needs a training set");
  struct Job {
    PruneCriterion criterion;
    double ratio;
  };
  std::vector<Job> jobs;
  for (auto criterion : config.criteria) {
    for (double ratio : config.ratios) jobs.push_back({criterion, ratio});
  }

  const bool needs_slimming = std::find(config.criteria.begin(), config.criteria.end(), PruneCriterion::Slimming) !=
                              config.criteria.end();
  Model slimmed;
  if (needs_slimming) {
    TrainConfig warmup = config.slimming_warmup;
    warmup.seed = mix_seed(config.seed, 0x51ULL);
    slimmed = train(f, train_set, warmup).model;
  }
  std::vector<Example> taylor_batch;
  {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(config.seed, 0x7a7ULL));
    shuffle(order, rng);
    for (std::size_t k = 0; k < std::min(config.taylor_batch, order.size()); ++k) {
      taylor_batch.push_back(train_set[order[k]]);
    }
  }

  std::vector<double> targets(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) targets[i] = train_set[i].y;
  auto srcc_on = [&](const Model& model) {
    std::vector<double> pred(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) pred[i] = predict_mos(model, train_set[i].x);
    return srcc(pred, targets);
  };

  PrunedPool pool;
  pool.members.resize(jobs.size());
  pool.srcc_on_d.resize(jobs.size());
  pool.flagged.resize(jobs.size());
  pool.parent_srcc_on_d = srcc_on(f);

  parallel_for(
      jobs.size(),
      [&](std::size_t j) {
        PruneSpec spec{jobs[j].criterion, jobs[j].ratio, {}};
        if (spec.criterion == PruneCriterion::TaylorFO) spec.batch = taylor_batch;
        const Model& base = spec.criterion == PruneCriterion::Slimming ? slimmed : f;
        Model pruned = prune(base, spec);
        pruned.lineage.parent = f.id;
        TrainConfig finetune = config.finetune;
        finetune.seed = mix_seed(config.seed, j + 1);
        Model member = train(std::move(pruned), train_set, finetune).model;
        member.scale_map = fit_scale_map(member, train_set);
        std::string id = std::to_string(j + 1);
        if (id.size() < 2) id.insert(0, "0");
        member.id = "h" + id;
        pool.srcc_on_d[j] = srcc_on(member);
        pool.flagged[j] = pool.srcc_on_d[j] < config.srcc_floor;
        pool.members[j] = std::move(member);
      },
      config.workers);
  return pool;
}

void write_pool_manifest(const std::filesystem::path& path, const std::vector<Model>& members,
                         const std::vector<std::string>& relative_paths) {
  if (members.size() != relative_paths.size()) throw std::invalid_argument("pool manifest size mismatch");
  json doc = {{"format", "selfgmad-pool"}, {"version", 1}, {"members", json::array()}};
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& lineage = members[i].lineage;
    doc["members"].push_back({{"id", members[i].id},
                              {"path", relative_paths[i]},
                              {"parent", lineage.parent},
                              {"criterion", lineage.criterion},
                              {"ratio", lineage.ratio},
                              {"round", lineage.round}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<Model> load_pool(const std::filesystem::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw DataError("cannot open pool manifest " + manifest.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  std::vector<Model> members;
  for (const auto& entry : doc.at("members")) {
    members.push_back(load_model(manifest.parent_path() / entry.at("path").get<std::string>()));
  }
  return members;
}

}  // namespace selfgmad
