#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfgmad/datapool.hpp"
#include "selfgmad/gmad.hpp"
#include "selfgmad/model.hpp"

namespace selfgmad {

// One-shot sample selectors compared against gMAD sampling. Every selector
// returns min(budget, |S|) distinct ids. Score-based selectors take the
// highest scores and break ties by ascending id, so they do not depend on
// the order in which the pool is presented.

std::vector<std::string> select_random(std::span<const std::string> ids, std::size_t budget, std::uint64_t seed);

/// Top-budget ids by descending score, ties by ascending id.
std::vector<std::string> top_by_score(std::span<const std::string> ids, std::span<const double> scores,
                                      std::size_t budget);

/// Population variance of the committee's scores per sample.
std::vector<double> qbc_scores(const ScoreMatrix& committee);
std::vector<std::string> select_qbc(const ScoreMatrix& committee, std::size_t budget);

/// mean_h |f(x) - h(x)| * ||d f_raw(x) / d theta||, with f and h on the MOS
/// scale. `committee` columns must follow `pool` order.
std::vector<double> emcm_scores(const Model& f, const ScoreMatrix& committee, std::span<const Sample> pool);
std::vector<std::string> select_emcm(const Model& f, const ScoreMatrix& committee, std::span<const Sample> pool,
                                     std::size_t budget);

struct RsalConfig {
  TrainConfig train;
  std::uint64_t seed = 41;
};

/// Auxiliary regressor of |f(x) - mos(x)| trained on the labeled set; same
/// layer structure as f with every hidden layer at half width.
Model train_residual_model(const Model& f, std::span<const Example> labeled, const RsalConfig& config);
std::vector<std::string> select_rsal(const Model& f, std::span<const Example> labeled, std::span<const Sample> pool,
                                     std::size_t budget, const RsalConfig& config);

enum class GsSpace { Input, Output, Joint };
std::string_view gs_space_name(GsSpace space);
GsSpace parse_gs_space(std::string_view name);

/// Greedy max-min selection over row-major points (count x dim): start at the
/// point nearest the centroid, then repeatedly add the point farthest from the
/// selected set. Ties break by ascending `ids`. Returns point indices.
std::vector<std::size_t> greedy_max_min(std::span<const double> points, std::size_t dim,
                                        std::span<const std::string> ids, std::size_t budget);

/// Greedy sampling on standardized coordinates: features, the model's
/// outputs, or both.
std::vector<std::string> select_gs(std::span<const Sample> pool, std::span<const double> outputs, std::size_t budget,
                                   GsSpace space = GsSpace::Joint);

/// Both images of each pair, by descending objective (ties by pair id),
/// skipping repeats, truncated to budget.
std::vector<std::string> gmad_sample_ids(std::span<const GmadPair> pairs, std::size_t budget);

struct SpottingRow {
  std::string selector;
  double srcc = 0.0;
  double plcc = 0.0;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
};

/// SRCC/PLCC between the model's scores and the reference MOS restricted to
/// the selected ids. `scores` and `mos` follow `ids`. Lower means the
/// selector found more failures.
SpottingRow spotting_row(const std::string& selector, std::span<const std::string> ids,
                         std::span<const double> scores, std::span<const double> mos,
                         std::span<const std::string> selected, std::uint64_t seed);

struct SpottingInputs {
  const Model* f = nullptr;
  const ScoreMatrix* committee = nullptr;  // pruned pool over `pool`
  std::span<const Sample> pool;
  std::span<const double> mos;             // reference quality, `pool` order
  std::span<const Example> labeled;        // f's training set, for RSAL
  std::span<const GmadPair> gmad_pairs;
  std::size_t budget = 200;
  std::uint64_t seed = 0;
  RsalConfig rsal;
};

/// Rows for random, qbc, emcm, rsal, gs and gmad, then "all" (the whole pool).
std::vector<SpottingRow> benchmark_spotting(const SpottingInputs& inputs);

// ablation.csv: selector,srcc,plcc,budget,seed
void write_ablation_csv(const std::filesystem::path& path, std::span<const SpottingRow> rows);
std::vector<SpottingRow> load_ablation_csv(const std::filesystem::path& path);

}  // namespace selfgmad
