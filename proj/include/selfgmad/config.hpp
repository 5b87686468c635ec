#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfgmad/datapool.hpp"
#include "selfgmad/gmad.hpp"
#include "selfgmad/pruning.hpp"
#include "selfgmad/subjective.hpp"

namespace selfgmad {

enum class LabelingBackend { Oracle, Live };

/// Every knob of a run. Read from a flat "key = value" file; '#' starts a
/// comment. Unknown keys and malformed values raise ConfigError.
struct RunConfig {
  std::uint64_t seed = 7;
  std::uint64_t world_seed = kDefaultWorldSeed;

  // data
  std::size_t dim = 16;
  std::size_t pool_size = 20000;
  std::size_t train_size = 4000;
  std::size_t probe_size = 1000;
  std::string train_bias = "noise>0.5&blur>0.5@0.005";
  std::string pool_bias = "uniform";
  std::string probe_bias = "uniform";

  // target model
  std::vector<std::size_t> hidden = {64, 32};
  double train_lr = 1e-3;
  int train_epochs = 60;
  std::size_t batch_size = 32;

  // pruned pool
  std::vector<PruneCriterion> criteria{kAllCriteria.begin(), kAllCriteria.end()};
  std::vector<double> ratios = {0.3, 0.5, 0.7};
  double prune_finetune_lr = 1e-3;
  int prune_finetune_epochs = 15;
  int slimming_epochs = 3;
  double slimming_l1 = 1e-3;
  std::size_t taylor_batch = 256;
  double srcc_floor = 0.5;

  // ensembles and selection
  std::size_t ensemble_size = 8;
  std::size_t ensembles = 120;
  std::size_t k = 1;
  std::vector<double> level_bounds = {0, 20, 40, 60, 80, 100};
  std::optional<std::size_t> budget;
  int rounds = 2;  // not hashed, so a finished run can be extended

  // labeling
  std::vector<LabelingBackend> labeling = {LabelingBackend::Oracle};  // per round, last entry repeats
  std::size_t subjects = 20;
  double rater_bias_sd = 3.0;
  double rater_noise_min = 2.0;
  double rater_noise_max = 6.0;
  double rater_outlier_prob = 0.03;
  double case_threshold = 10.0;

  // rectification
  double rectify_lr = 1e-4;
  int rectify_epochs = 10;
  double forget_epsilon = 0.05;

  // evaluation
  std::size_t tournament_pairs_per_level = 20;
  std::size_t ablation_budget = 200;

  std::size_t workers = 0;  // not part of the hash; results do not depend on it

  void validate() const;

  std::vector<QualityLevel> levels() const;
  BiasSpec train_bias_spec() const { return BiasSpec::parse(train_bias); }
  BiasSpec pool_bias_spec() const { return BiasSpec::parse(pool_bias); }
  BiasSpec probe_bias_spec() const { return BiasSpec::parse(probe_bias); }
  std::vector<std::size_t> widths() const;
  LabelingBackend backend_for_round(int round) const;

  TrainConfig train_config() const;
  PoolConfig pool_config() const;
  PanelConfig panel_config() const;

  /// Deterministic per-purpose seed derived from `seed`.
  std::uint64_t derived_seed(std::string_view purpose) const;

  /// Sorted "key = value" lines, one per hashed key.
  std::string canonical() const;
  /// fnv1a of canonical(), as 16 hex digits.
  std::string hash() const;
};

RunConfig parse_config(std::string_view text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Sets one key from its textual value. Throws ConfigError.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

std::string_view backend_name(LabelingBackend backend);

}  // namespace selfgmad
