#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "selfgmad/config.hpp"

namespace selfgmad {

/// File layout of one run:
///   run.json                      config hash, seed, canonical config
///   data/samples_{S,D,probe}.jsonl, data/labels_{D,probe}.jsonl
///   rounds/0/models/              f, h01..hNN, pool.json; metrics.json
///   rounds/<t>/                   ensembles.jsonl, scores.csv, pairs.jsonl,
///                                 ratings.jsonl, labels.jsonl, cases.csv,
///                                 models/, metrics.json (written last)
///   tournament/, rankings.csv, ablation.csv, report.md
class RunDir {
 public:
  explicit RunDir(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest() const { return root_ / "run.json"; }
  std::filesystem::path samples(std::string_view set) const;
  std::filesystem::path labels(std::string_view set) const;
  std::filesystem::path round(int t) const { return root_ / "rounds" / std::to_string(t); }
  std::filesystem::path models(int t) const { return round(t) / "models"; }
  std::filesystem::path model(int t, std::string_view id) const;
  std::filesystem::path pool_manifest(int t) const { return models(t) / "pool.json"; }
  std::filesystem::path ensembles(int t) const { return round(t) / "ensembles.jsonl"; }
  std::filesystem::path scores(int t) const { return round(t) / "scores.csv"; }
  std::filesystem::path pairs(int t) const { return round(t) / "pairs.jsonl"; }
  std::filesystem::path ratings(int t) const { return round(t) / "ratings.jsonl"; }
  std::filesystem::path live_ratings(int t) const { return round(t) / "live_ratings.jsonl"; }
  std::filesystem::path round_labels(int t) const { return round(t) / "labels.jsonl"; }
  std::filesystem::path cases(int t) const { return round(t) / "cases.csv"; }
  std::filesystem::path metrics(int t) const { return round(t) / "metrics.json"; }
  std::filesystem::path tournament() const { return root_ / "tournament"; }
  std::filesystem::path rankings() const { return root_ / "rankings.csv"; }
  std::filesystem::path ablation() const { return root_ / "ablation.csv"; }
  std::filesystem::path report() const { return root_ / "report.md"; }

  /// Rounds 1..t whose metrics.json exists, counted from 1 without gaps.
  int completed_rounds() const;

 private:
  std::filesystem::path root_;
};

/// Creates run.json on first use; afterwards any difference in the config
/// hash raises ConfigError.
void bind_config(const RunDir& run, const RunConfig& config);

/// Writes through a temporary file and a rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace selfgmad
