#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfgmad/model.hpp"
#include "selfgmad/score_matrix.hpp"

namespace selfgmad {

/// A MOS interval [lo, hi); the top level also includes hi.
struct QualityLevel {
  int index = 0;
  double lo = 0.0;
  double hi = 100.0;
  std::string label;
  bool closed_above = false;

  bool contains(double score) const { return score >= lo && (score < hi || (closed_above && score == hi)); }
};

/// Equal-width bad/poor/fair/good/excellent levels partitioning [0,100].
std::vector<QualityLevel> default_levels();

/// One selected pair. The attacker claims x is better than y while the
/// defender rates both inside `level`.
struct GmadPair {
  std::string pair_id;
  std::string x_id;
  std::string y_id;
  std::string attacker;
  std::string defender;
  int level = 0;
  int k_rank = 1;
  double objective = 0.0;
  int round = 0;

  bool operator==(const GmadPair&) const = default;
};

/// Stable identifier: hash of (round, attacker, defender, level, x, y).
std::string make_pair_id(int round, const std::string& attacker, const std::string& defender, int level,
                         const std::string& x_id, const std::string& y_id);

struct Contestant {
  std::string id;
  std::span<const double> scores;  // aligned with the sample id list
};

/// (att(x) - att(y)) - (def(x) - def(y)).
double gmad_objective(std::span<const double> attacker, std::span<const double> defender, std::size_t x,
                      std::size_t y);

/// Scores every sample with every model's predict_mos; one row per model.
ScoreMatrix build_score_matrix(std::span<const Model> models, std::span<const Sample> pool);

/// Sample indices per level by defender score. Throws DataError if a
/// score falls outside every level.
std::vector<std::vector<std::size_t>> partition_levels(std::span<const double> defender,
                                                       std::span<const QualityLevel> levels);

struct PairSelection {
  std::vector<GmadPair> pairs;
  std::vector<std::string> warnings;
};

/// Top-k pairs maximizing the objective among `candidates` (indices whose
/// defender score lies in `level`). With d = attacker - defender the
/// objective is d(x) - d(y), so the r-th pair is the largest and smallest d
/// left after removing earlier picks. Ties break on lexicographic sample id.
/// Fewer than 2k candidates yields fewer pairs plus a warning.
PairSelection select_pairs_among(const Contestant& defender, const Contestant& attacker,
                                 std::span<const std::string> sample_ids, std::span<const std::size_t> candidates,
                                 const QualityLevel& level, std::size_t k, int round);

/// Convenience form: filters the level population itself, skipping excluded samples.
PairSelection select_pairs(const Contestant& defender, const Contestant& attacker,
                           std::span<const std::string> sample_ids, const QualityLevel& level, std::size_t k,
                           int round, std::span<const std::uint8_t> excluded = {});

struct GmadSetConfig {
  std::vector<QualityLevel> levels = default_levels();
  std::size_t k = 1;
  int round = 1;
  std::optional<std::size_t> budget;
};

struct DuplicatePair {
  std::string kept_pair_id;
  std::string dropped_pair_id;
};

struct GmadSet {
  std::vector<GmadPair> pairs;
  std::vector<DuplicatePair> duplicates;
  std::vector<std::string> warnings;
  std::size_t selected_before_dedup = 0;
};

/// Exhausts ensembles x levels x both roles x k against the target, then
/// deduplicates by unordered image pair (first seen kept) and applies the
/// optional budget. Samples flagged in `excluded` are never selected.
GmadSet assemble_gmad_set(const Contestant& target, const ScoreMatrix& competitors, const GmadSetConfig& config,
                          std::span<const std::uint8_t> excluded = {});

/// Keeps `budget` pairs: an equal quota per (level, target role) stratum by
/// descending objective, with any shortfall filled by the best leftovers.
/// Output preserves the input order and is a subset of it.
std::vector<GmadPair> apply_budget(std::span<const GmadPair> pairs, const std::string& target_id,
                                   std::size_t level_count, std::size_t budget);

// pairs.jsonl: one GmadPair per line
void write_pairs(const std::filesystem::path& path, std::span<const GmadPair> pairs);
std::vector<GmadPair> load_pairs(const std::filesystem::path& path);

}  // namespace selfgmad
