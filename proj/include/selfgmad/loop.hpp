#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "selfgmad/al_baselines.hpp"
#include "selfgmad/config.hpp"
#include "selfgmad/datapool.hpp"
#include "selfgmad/evaluation.hpp"
#include "selfgmad/model.hpp"
#include "selfgmad/run_dir.hpp"
#include "selfgmad/subjective.hpp"

namespace selfgmad {

/// The three generated sets and their reference labels.
struct World {
  std::vector<Sample> pool;   // S
  std::vector<Sample> train;  // D
  std::vector<Sample> probe;
  LabeledSet train_labels;
  LabeledSet probe_labels;
  SampleIndex index;  // over all three sets

  World() = default;
  World(const World&) = delete;
  World& operator=(const World&) = delete;
  World(World&&) = default;
  World& operator=(World&&) = default;
};

/// Snapshot after round t: f(t), the pool h_j(t) and every gMAD label set so far.
struct RoundState {
  int t = 0;
  Model f;
  std::vector<Model> pool;
  std::vector<LabeledSet> gmad_labels;  // L(1)..L(t)

  /// Union of L(1)..L(t); later rounds never relabel an earlier image.
  LabeledSet union_labels() const;
};

// Individual steps. Each reads and writes only run-directory files.
World synthesize_world(const RunConfig& config);
void step_synth(const RunDir& run, const RunConfig& config);
World load_world(const RunDir& run);
void step_train(const RunDir& run, const RunConfig& config, std::ostream& log);
void step_prune(const RunDir& run, const RunConfig& config, std::ostream& log);
void step_ensembles(const RunDir& run, const RunConfig& config, int t);
void step_score(const RunDir& run, const RunConfig& config, int t);
void step_gmad(const RunDir& run, const RunConfig& config, int t, std::ostream& log);
/// Oracle mode simulates the panel; live mode reads live_ratings.jsonl and
/// throws IncompleteStudy until every image has enough ratings.
void step_label(const RunDir& run, const RunConfig& config, int t, std::ostream& log);
void step_rectify(const RunDir& run, const RunConfig& config, int t, std::ostream& log);

/// Bootstraps rounds/0 when needed, then runs rounds until `rounds` are
/// complete. Finished rounds are skipped, so an interrupted run resumes.
void run_rounds(const RunDir& run, const RunConfig& config, int rounds, std::ostream& log);

RoundState load_round_state(const RunDir& run, int t);

/// Oracle backend: every subject rates every distinct image of `pairs` once
/// (single stimulus); each record carries the first pair naming the image.
std::vector<RatingRecord> simulate_study(std::span<const GmadPair> pairs, const SampleIndex& index,
                                         std::span<const SubjectProfile> panel);

/// Distinct images of `pairs` in first-appearance order with their first pair id.
std::vector<std::pair<std::string, std::string>> study_items(std::span<const GmadPair> pairs);

struct RectifyConfig {
  TrainConfig train;
  double forget_epsilon = 0.05;
  std::size_t workers = 0;
};

/// Sample indices of one step: ceil(b/2) from D and floor(b/2) from L.
struct RectifyBatch {
  std::vector<std::size_t> from_d;
  std::vector<std::size_t> from_l;
};

/// One epoch of half/half batches. The side needing more steps is walked in
/// shuffled order (wrapping on the last step); the other is drawn with
/// replacement.
std::vector<RectifyBatch> plan_rectify_epoch(std::size_t d_size, std::size_t l_size, std::size_t batch, Rng& rng);

/// Joint fine-tuning on D and L with half/half batches, then a scale-map
/// refit on D and L. Returns the model unchanged when L is empty.
Model rectify_model(Model model, std::span<const Example> d, std::span<const Example> l, const TrainConfig& config);
std::vector<Model> rectify(std::vector<Model> models, std::span<const Example> d, std::span<const Example> l,
                           const RectifyConfig& config);

/// Tournament among f(0)..f(r) on S minus every labeled image, labeled by the
/// simulated panel; writes tournament/ and rankings.csv.
RankingResult step_tournament(const RunDir& run, const RunConfig& config, std::ostream& log);
/// Failure-spotting comparison for f(0); writes ablation.csv.
std::vector<SpottingRow> step_ablation(const RunDir& run, const RunConfig& config, std::ostream& log);
void step_report(const RunDir& run);

/// SRCC/PLCC of a model on labeled examples (NaN when undefined).
std::pair<double, double> correlations(const Model& model, std::span<const Example> examples);

}  // namespace selfgmad
