#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "selfgmad/gmad.hpp"
#include "selfgmad/subjective.hpp"

namespace selfgmad {

/// Fractional ranks (1-based, ties averaged).
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties. Requires equal
/// lengths >= 2 and non-constant inputs.
double srcc(std::span<const double> pred, std::span<const double> mos);
/// Pearson linear correlation. Same preconditions as srcc.
double plcc(std::span<const double> pred, std::span<const double> mos);

struct TournamentConfig {
  std::size_t pairs_per_level = 20;  // split across the two roles
  std::vector<QualityLevel> levels = default_levels();
  int round = 0;
};

struct RatedPair {
  GmadPair pair;
  double mos_x = 0.0;
  double mos_y = 0.0;
};

struct TournamentResult {
  std::vector<std::string> model_ids;
  std::vector<GmadPair> pairs;
  std::vector<RatedPair> rated;
  std::size_t competitions = 0;
  std::vector<std::string> warnings;
};

/// Selects gMAD pairs for every unordered model pair, both roles, every level.
/// `scores` holds one row per competing model over the candidate samples.
TournamentResult tournament_pairs(const ScoreMatrix& scores, const TournamentConfig& config,
                                  std::span<const std::uint8_t> excluded = {});

/// Attaches MOS to tournament pairs; pairs with an unlabeled image are dropped.
void attach_mos(TournamentResult& result, const LabeledSet& labels);

struct RankingResult {
  std::vector<std::string> model_ids;
  std::vector<double> aggressiveness;
  std::vector<double> resistance;
  std::vector<double> raw_aggressiveness;
  std::vector<double> raw_resistance;
  /// gap_matrix[attacker][defender]: mean signed human gap; NaN on the diagonal
  /// and for pairs that never met.
  std::vector<std::vector<double>> gap_matrix;
};

/// Signed-mean-then-standardize aggregation. For a rated pair with attacker A
/// claiming x > y, gap = (mos(x) - mos(y)) / 100 is credited to A's
/// aggressiveness and debited from the defender's resistance; each is
/// averaged over the model's appearances in that role and then standardized
/// across models (population sd; all-zero when the spread is zero).
RankingResult global_ranking(std::span<const RatedPair> rated, const std::vector<std::string>& model_ids);

void write_rankings_csv(const std::filesystem::path& path, const RankingResult& ranking);

/// Builds report.md from rounds/<t>/metrics.json, rankings.csv and
/// ablation.csv under a run directory. Missing files leave their table with
/// headers only. Pure function of the directory contents.
std::string build_report(const std::filesystem::path& run_dir);

}  // namespace selfgmad
