#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfgmad/model.hpp"

namespace selfgmad {

enum class PruneCriterion { OMP, L1Filter, L2Filter, TaylorFO, Slimming, FPGM };
enum class Granularity { Weight, Unit };

inline constexpr std::array<PruneCriterion, 6> kAllCriteria = {
    PruneCriterion::OMP,      PruneCriterion::L1Filter, PruneCriterion::L2Filter,
    PruneCriterion::TaylorFO, PruneCriterion::Slimming, PruneCriterion::FPGM};

std::string_view criterion_name(PruneCriterion criterion);
std::optional<PruneCriterion> parse_criterion(std::string_view name);
/// OMP prunes individual weights; every other criterion prunes hidden units.
Granularity granularity_of(PruneCriterion criterion);

struct PruneSpec {
  PruneCriterion criterion = PruneCriterion::OMP;
  double ratio = 0.5;
  std::vector<Example> batch;  // required by TaylorFO

  void validate() const;
};

/// Importance of every hidden unit, indexed [hidden layer][unit]. Lower
/// means pruned first; masked units score +infinity. Not defined for OMP.
std::vector<std::vector<double>> unit_scores(const Model& model, const PruneSpec& spec);

/// Masks the lowest-scoring entries. OMP: floor(ratio * live weights) over
/// all non-output layers, globally. Unit criteria: floor(ratio * live units)
/// per hidden layer, capped so one unit survives. Ties break by (layer, index).
Model prune(const Model& model, const PruneSpec& spec);

/// Removes hidden unit `unit` of layer `layer`: its unit mask, incoming row
/// and the matching outgoing column of the next layer.
void mask_unit(Model& model, std::size_t layer, std::size_t unit);

/// Masked weight count over the non-output layers.
std::size_t masked_prunable_weights(const Model& model);
std::size_t prunable_weights(const Model& model);
/// Masked units per hidden layer.
std::vector<std::size_t> masked_units(const Model& model);

/// Weiszfeld iteration with the Vardi-Zhang step when the iterate lands on
/// a data point. Stops when a step moves less than tol times the data scale.
std::vector<double> geometric_median(std::span<const std::vector<double>> points, double tol = 1e-12,
                                     int max_iterations = 100000);
/// Sum of Euclidean distances from `center` to every point.
double sum_of_distances(std::span<const std::vector<double>> points, std::span<const double> center);

struct PoolConfig {
  std::vector<PruneCriterion> criteria{kAllCriteria.begin(), kAllCriteria.end()};
  std::vector<double> ratios{0.3, 0.5, 0.7};
  TrainConfig finetune;        // recovery fine-tune after pruning
  TrainConfig slimming_warmup; // l1-on-scales pre-training for Slimming
  std::size_t taylor_batch = 256;
  double srcc_floor = 0.0;     // members below it on D are flagged, not dropped
  std::uint64_t seed = 11;
  std::size_t workers = 0;     // 0 = hardware concurrency

  PoolConfig();
};

struct PrunedPool {
  std::vector<Model> members;       // criterion-major, ratio-minor
  std::vector<double> srcc_on_d;
  std::vector<bool> flagged;
  double parent_srcc_on_d = 0.0;
};

/// Prunes f under every (criterion, ratio), fine-tunes each member on D with
/// its mask frozen and refits its scale map on D.
PrunedPool build_pruned_pool(const Model& f, std::span<const Example> train_set, const PoolConfig& config);

// pool.json: ordered member file paths plus lineage
void write_pool_manifest(const std::filesystem::path& path, const std::vector<Model>& members,
                         const std::vector<std::string>& relative_paths);
std::vector<Model> load_pool(const std::filesystem::path& manifest);

}  // namespace selfgmad
