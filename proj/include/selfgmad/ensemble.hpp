#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "selfgmad/score_matrix.hpp"

namespace selfgmad {

/// One random-subset ensemble over a pool of m pruned models. The ensemble
/// score is the plain mean of the selected members' MOS-scale scores.
struct EnsembleSpec {
  std::string id;
  std::vector<std::size_t> members;  // ascending pool indices, size s

  std::size_t size() const { return members.size(); }
  /// 0/1 membership row of length m.
  std::vector<std::uint8_t> membership(std::size_t m) const;
  bool operator==(const EnsembleSpec&) const = default;
};

/// C(m, s), saturating at UINT64_MAX.
std::uint64_t binomial(std::size_t m, std::size_t s);

/// n pairwise-distinct s-subsets of {0..m-1}, deterministic per seed.
/// Throws std::invalid_argument when s is out of range or n > C(m, s).
std::vector<EnsembleSpec> sample_ensembles(std::size_t m, std::size_t s, std::size_t n, std::uint64_t seed);

/// Mean of the member scores for one sample column of the pool matrix.
double ensemble_predict(const EnsembleSpec& spec, const ScoreMatrix& pool_scores, std::size_t sample);

/// One row per ensemble over every sample of the pool matrix.
ScoreMatrix ensemble_scores(std::span<const EnsembleSpec> specs, const ScoreMatrix& pool_scores);

// ensembles.jsonl: {"id","members":[indices]}
void write_ensembles(const std::filesystem::path& path, std::span<const EnsembleSpec> specs);
std::vector<EnsembleSpec> load_ensembles(const std::filesystem::path& path, std::size_t pool_size);

}  // namespace selfgmad
