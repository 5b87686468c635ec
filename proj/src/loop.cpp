#include "selfgmad/loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "selfgmad/ensemble.hpp"
#include "selfgmad/error.hpp"
#include "selfgmad/gmad.hpp"
#include "selfgmad/parallel.hpp"
#include "selfgmad/pruning.hpp"

namespace selfgmad {

using nlohmann::json;

namespace {

constexpr const char* kTarget = "f";

std::vector<Example> examples_of(const LabeledSet& labels, const SampleIndex& index) {
  return resolve_examples(labels, index);
}

double nan_if_missing() { return std::numeric_limits<double>::quiet_NaN(); }

json number(double value) { return std::isfinite(value) ? json(value) : json(nullptr); }

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::set<std::string> labeled_before(const RunDir& run, int t) {
  std::set<std::string> ids;
  for (int j = 1; j < t; ++j) {
    for (const auto& [id, entry] : load_labels(run.round_labels(j)).entries) ids.insert(id);
  }
  return ids;
}

std::vector<Sample> unlabeled_pool(const World& world, const std::set<std::string>& labeled) {
  std::vector<Sample> out;
  out.reserve(world.pool.size());
  for (const auto& s : world.pool) {
    if (!labeled.count(s.id)) out.push_back(s);
  }
  return out;
}

void save_models(const RunDir& run, int t, const Model& f, const std::vector<Model>& pool) {
  save_model(run.model(t, kTarget), f);
  std::vector<std::string> paths;
  for (const auto& h : pool) {
    save_model(run.model(t, h.id), h);
    paths.push_back(h.id + ".json");
  }
  write_pool_manifest(run.pool_manifest(t), pool, paths);
}

LabeledSet label_from_ratings(const CleaningResult& cleaned, int t) {
  LabeledSet labels;
  labels.role = LabelRole::Gmad;
  labels.round = t;
  labels.entries = compute_mos(cleaned.ratings);
  return labels;
}

std::size_t complete_items(std::span<const std::pair<std::string, std::string>> items,
                           std::span<const RatingRecord> ratings, std::size_t subjects) {
  std::map<std::string, std::set<std::string>> raters;
  for (const auto& r : ratings) raters[r.sample_id].insert(r.subject_id);
  std::size_t complete = 0;
  for (const auto& [sample, pair] : items) {
    auto it = raters.find(sample);
    if (it != raters.end() && it->second.size() >= subjects) ++complete;
  }
  return complete;
}

json case_counts(const std::array<std::size_t, 4>& c, bool target_defends) {
  const std::size_t total = c[0] + c[1] + c[2] + c[3];
  // Target defends: it fails in cases II and IV. Target attacks: the
  // ensemble fails in cases III and IV.
  const std::size_t failures = target_defends ? c[1] + c[3] : c[2] + c[3];
  return {{"I", c[0]},
          {"II", c[1]},
          {"III", c[2]},
          {"IV", c[3]},
          {"total", total},
          {"failure_rate", total ? number(static_cast<double>(failures) / static_cast<double>(total)) : json(nullptr)}};
}

}  // namespace

LabeledSet RoundState::union_labels() const {
  LabeledSet all;
  all.role = LabelRole::Gmad;
  all.round = t;
  for (const auto& l : gmad_labels) {
    for (const auto& [id, entry] : l.entries) {
      if (!all.entries.emplace(id, entry).second) throw DataError("sample " + id + " labeled in two rounds");
    }
  }
  return all;
}

std::pair<double, double> correlations(const Model& model, std::span<const Example> examples) {
  std::vector<double> pred, mos;
  pred.reserve(examples.size());
  mos.reserve(examples.size());
  for (const auto& e : examples) {
    pred.push_back(predict_mos(model, e.x));
    mos.push_back(e.y);
  }
  double s = nan_if_missing(), p = nan_if_missing();
  try {
    s = srcc(pred, mos);
    p = plcc(pred, mos);
  } catch (const std::invalid_argument&) {
  }
  return {s, p};
}

// ---------------------------------------------------------------------------
// world

World synthesize_world(const RunConfig& config) {
  World world;
  world.pool = synth_pool(config.pool_size, config.dim, config.derived_seed("S"), config.pool_bias_spec(),
                          {"S", config.world_seed});
  world.train = synth_pool(config.train_size, config.dim, config.derived_seed("D"), config.train_bias_spec(),
                           {"D", config.world_seed});
  world.probe = synth_pool(config.probe_size, config.dim, config.derived_seed("probe"), config.probe_bias_spec(),
                           {"P", config.world_seed});
  world.train_labels = oracle_labels(world.train, LabelRole::TrainD);
  world.probe_labels = oracle_labels(world.probe, LabelRole::Probe);
  world.index.add(world.pool);
  world.index.add(world.train);
  world.index.add(world.probe);
  return world;
}

void step_synth(const RunDir& run, const RunConfig& config) {
  const World world = synthesize_world(config);
  write_samples(run.samples("S"), world.pool);
  write_samples(run.samples("D"), world.train);
  write_samples(run.samples("probe"), world.probe);
  write_labels(run.labels("D"), world.train_labels);
  write_labels(run.labels("probe"), world.probe_labels);
}

World load_world(const RunDir& run) {
  World world;
  world.pool = load_manifest(run.samples("S"));
  world.train = load_manifest(run.samples("D"));
  world.probe = load_manifest(run.samples("probe"));
  world.train_labels = load_labels(run.labels("D"));
  world.probe_labels = load_labels(run.labels("probe"));
  world.index.add(world.pool);
  world.index.add(world.train);
  world.index.add(world.probe);
  return world;
}

// ---------------------------------------------------------------------------
// bootstrap

void step_train(const RunDir& run, const RunConfig& config, std::ostream& log) {
  const World world = load_world(run);
  const auto d = examples_of(world.train_labels, world.index);
  Model f = init_model(config.widths(), config.derived_seed("f-init"), kTarget);
  auto result = train(std::move(f), d, config.train_config());
  Model trained = std::move(result.model);
  trained.scale_map = fit_scale_map(trained, d);
  trained.lineage = {};
  save_model(run.model(0, kTarget), trained);
  log << "train: mse " << result.loss_trace.front() << " -> " << result.loss_trace.back() << "\n";
}

void step_prune(const RunDir& run, const RunConfig& config, std::ostream& log) {
  const World world = load_world(run);
  const auto d = examples_of(world.train_labels, world.index);
  const auto probe = examples_of(world.probe_labels, world.index);
  const Model f = load_model(run.model(0, kTarget));
  PrunedPool pool = build_pruned_pool(f, d, config.pool_config());
  save_models(run, 0, f, pool.members);

  const auto [probe_srcc, probe_plcc] = correlations(f, probe);
  json members = json::array();
  for (std::size_t j = 0; j < pool.members.size(); ++j) {
    const auto [s, p] = correlations(pool.members[j], probe);
    members.push_back({{"id", pool.members[j].id},
                       {"criterion", pool.members[j].lineage.criterion},
                       {"ratio", pool.members[j].lineage.ratio},
                       {"train_srcc", number(pool.srcc_on_d[j])},
                       {"probe_srcc", number(s)},
                       {"probe_plcc", number(p)},
                       {"flagged", static_cast<bool>(pool.flagged[j])}});
    if (pool.flagged[j]) log << "prune: " << pool.members[j].id << " fell below the SRCC floor on D\n";
  }
  json metrics = {{"round", 0},
                  {"target", "f0"},
                  {"probe", {{"srcc", number(probe_srcc)}, {"plcc", number(probe_plcc)}}},
                  {"train_srcc", number(pool.parent_srcc_on_d)},
                  {"pool", members}};
  write_text_atomic(run.metrics(0), metrics.dump(2) + "\n");
  log << "prune: " << pool.members.size() << " members, f0 probe SRCC " << probe_srcc << "\n";
}

// ---------------------------------------------------------------------------
// one round

RoundState load_round_state(const RunDir& run, int t) {
  RoundState state;
  state.t = t;
  state.f = load_model(run.model(t, kTarget));
  state.pool = load_pool(run.pool_manifest(t));
  for (int j = 1; j <= t; ++j) state.gmad_labels.push_back(load_labels(run.round_labels(j)));
  return state;
}

void step_ensembles(const RunDir& run, const RunConfig& config, int t) {
  const std::size_t m = load_pool(run.pool_manifest(t - 1)).size();
  const auto specs = sample_ensembles(m, config.ensemble_size, config.ensembles,
                                      config.derived_seed("ensembles-" + std::to_string(t)));
  write_ensembles(run.ensembles(t), specs);
}

void step_score(const RunDir& run, const RunConfig& config, int t) {
  (void)config;
  const World world = load_world(run);
  const RoundState state = load_round_state(run, t - 1);
  const auto candidates = unlabeled_pool(world, labeled_before(run, t));
  std::vector<Model> models;
  models.push_back(state.f);
  models.insert(models.end(), state.pool.begin(), state.pool.end());
  write_scores(run.scores(t), build_score_matrix(models, candidates));
}

void step_gmad(const RunDir& run, const RunConfig& config, int t, std::ostream& log) {
  if (!std::filesystem::is_regular_file(run.scores(t))) {
    throw DataError("no score matrix for round " + std::to_string(t) + " at " + run.scores(t).string());
  }
  const ScoreMatrix scores = load_scores(run.scores(t));
  scores.validate();
  const auto target_index = scores.model_index(kTarget);
  if (!target_index) throw DataError(run.scores(t).string() + " has no column for the target model");

  std::vector<std::string> member_ids;
  for (std::size_t i = 0; i < scores.models(); ++i) {
    if (i != *target_index) member_ids.push_back(scores.model_ids()[i]);
  }
  ScoreMatrix pool_scores(member_ids, scores.sample_ids());
  for (std::size_t j = 0; j < member_ids.size(); ++j) {
    const auto src = scores.row(member_ids[j]);
    std::copy(src.begin(), src.end(), pool_scores.row(j).begin());
  }
  const auto specs = load_ensembles(run.ensembles(t), member_ids.size());
  const ScoreMatrix ens = ensemble_scores(specs, pool_scores);

  GmadSetConfig gcfg;
  gcfg.levels = config.levels();
  gcfg.k = config.k;
  gcfg.round = t;
  gcfg.budget = config.budget;
  const GmadSet set = assemble_gmad_set(Contestant{kTarget, scores.row(*target_index)}, ens, gcfg);
  write_pairs(run.pairs(t), set.pairs);
  json summary = {{"selected", set.selected_before_dedup},
                  {"pairs", set.pairs.size()},
                  {"duplicates", set.duplicates.size()},
                  {"warnings", set.warnings}};
  write_text_atomic(run.round(t) / "gmad.json", summary.dump(2) + "\n");
  log << "gmad: round " << t << " selected " << set.selected_before_dedup << ", kept " << set.pairs.size() << " ("
      << set.duplicates.size() << " duplicates, " << set.warnings.size() << " warnings)\n";
}

std::vector<std::pair<std::string, std::string>> study_items(std::span<const GmadPair> pairs) {
  std::vector<std::pair<std::string, std::string>> items;
  std::unordered_set<std::string> seen;
  for (const auto& p : pairs) {
    for (const auto* id : {&p.x_id, &p.y_id}) {
      if (seen.insert(*id).second) items.emplace_back(*id, p.pair_id);
    }
  }
  return items;
}

std::vector<RatingRecord> simulate_study(std::span<const GmadPair> pairs, const SampleIndex& index,
                                         std::span<const SubjectProfile> panel) {
  std::vector<RatingRecord> ratings;
  for (const auto& [sample_id, pair_id] : study_items(pairs)) {
    const Sample& sample = index.at(sample_id);
    for (const auto& subject : panel) {
      ratings.push_back({pair_id, sample_id, subject.subject_id, oracle_rate(sample, subject), RatingFlag::Kept});
    }
  }
  return ratings;
}

void step_label(const RunDir& run, const RunConfig& config, int t, std::ostream& log) {
  const auto pairs = load_pairs(run.pairs(t));
  const LabelingBackend backend = config.backend_for_round(t);
  std::vector<RatingRecord> raw;
  if (backend == LabelingBackend::Oracle) {
    const World world = load_world(run);
    raw = simulate_study(pairs, world.index, simulated_panel(config.panel_config()));
  } else {
    const auto items = study_items(pairs);
    if (std::filesystem::is_regular_file(run.live_ratings(t))) raw = load_ratings(run.live_ratings(t));
    const std::size_t complete = complete_items(items, raw, config.subjects);
    if (complete < items.size()) {
      throw IncompleteStudy("round " + std::to_string(t) + " live study: " + std::to_string(complete) + " of " +
                            std::to_string(items.size()) + " images have " + std::to_string(config.subjects) +
                            " ratings (" + std::to_string(raw.size()) + " ratings so far)");
    }
  }

  const CleaningResult cleaned = reject_outliers(std::move(raw));
  write_ratings(run.ratings(t), cleaned.ratings);
  const LabeledSet labels = label_from_ratings(cleaned, t);
  write_labels(run.round_labels(t), labels);
  const CaseSummary cases = classify_cases(pairs, kTarget, labels, config.case_threshold);
  write_cases(run.cases(t), pairs, cases);

  json rejected = json::array();
  for (const auto& s : cleaned.subjects) {
    if (s.rejected) rejected.push_back(s.subject_id);
  }
  json summary = {{"backend", backend_name(backend)},
                  {"ratings", cleaned.ratings.size()},
                  {"removed", cleaned.removed},
                  {"removal_rate", cleaned.removal_rate},
                  {"rejected_subjects", rejected},
                  {"excluded_samples", cleaned.excluded_samples},
                  {"cases",
                   {{"competitor_attacks", case_counts(cases.counts[0], true)},
                    {"target_attacks", case_counts(cases.counts[1], false)},
                    {"excluded", cases.excluded}}}};
  write_text_atomic(run.round(t) / "labeling.json", summary.dump(2) + "\n");
  log << "label: round " << t << " " << labels.size() << " images, removal rate " << cleaned.removal_rate << ", "
      << rejected.size() << " subjects rejected\n";
}

// ---------------------------------------------------------------------------
// rectification

std::vector<RectifyBatch> plan_rectify_epoch(std::size_t d_size, std::size_t l_size, std::size_t batch, Rng& rng) {
  if (d_size == 0 || l_size == 0) throw std::invalid_argument("rectification needs both D and L");
  const std::size_t half_d = (batch + 1) / 2;
  const std::size_t half_l = batch / 2;
  if (half_l == 0) throw std::invalid_argument("rectification batch must hold at least two samples");
  const std::size_t steps_d = (d_size + half_d - 1) / half_d;
  const std::size_t steps_l = (l_size + half_l - 1) / half_l;
  const bool walk_d = steps_d >= steps_l;
  const std::size_t walked_size = walk_d ? d_size : l_size;
  const std::size_t walked_half = walk_d ? half_d : half_l;
  const std::size_t drawn_size = walk_d ? l_size : d_size;
  const std::size_t drawn_half = walk_d ? half_l : half_d;
  const std::size_t steps = walk_d ? steps_d : steps_l;

  std::vector<std::size_t> order(walked_size);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  std::vector<RectifyBatch> plan(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<std::size_t> walked(walked_half), drawn(drawn_half);
    for (std::size_t i = 0; i < walked_half; ++i) walked[i] = order[(s * walked_half + i) % walked_size];
    for (std::size_t i = 0; i < drawn_half; ++i) drawn[i] = rng.index(drawn_size);
    plan[s].from_d = walk_d ? std::move(walked) : std::move(drawn);
    plan[s].from_l = walk_d ? std::move(drawn) : std::move(walked);
  }
  return plan;
}

Model rectify_model(Model model, std::span<const Example> d, std::span<const Example> l, const TrainConfig& config) {
  config.validate();
  if (l.empty() || config.max_epochs == 0) return model;
  enforce_constraints(model);
  AdamOptimizer optimizer(model.parameter_count(), config.adam);
  Rng rng(mix_seed(config.seed, model.id));
  std::vector<const Example*> batch;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (const auto& step : plan_rectify_epoch(d.size(), l.size(), config.batch_size, rng)) {
      batch.clear();
      for (auto i : step.from_d) batch.push_back(&d[i]);
      for (auto i : step.from_l) batch.push_back(&l[i]);
      double loss = 0.0;
      const auto grad = loss_gradient(model, batch, 0.0, &loss);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("rectifying " + model.id + ": non-finite loss at epoch " + std::to_string(epoch));
      }
      optimizer.step(model, grad);
    }
  }
  std::vector<Example> calibration(d.begin(), d.end());
  calibration.insert(calibration.end(), l.begin(), l.end());
  model.scale_map = fit_scale_map(model, calibration);
  return model;
}

std::vector<Model> rectify(std::vector<Model> models, std::span<const Example> d, std::span<const Example> l,
                           const RectifyConfig& config) {
  parallel_for(
      models.size(), [&](std::size_t i) { models[i] = rectify_model(std::move(models[i]), d, l, config.train); },
      config.workers);
  return models;
}

void step_rectify(const RunDir& run, const RunConfig& config, int t, std::ostream& log) {
  const World world = load_world(run);
  RoundState state = load_round_state(run, t - 1);
  const LabeledSet current = load_labels(run.round_labels(t));
  state.gmad_labels.push_back(current);
  state.t = t;
  const LabeledSet all_labels = state.union_labels();
  for (const auto& [id, entry] : all_labels.entries) {
    if (world.train_labels.contains(id)) throw DataError("gMAD label " + id + " overlaps D");
  }

  const auto d = examples_of(world.train_labels, world.index);
  const auto l = examples_of(all_labels, world.index);
  const auto l_now = examples_of(current, world.index);
  const auto probe = examples_of(world.probe_labels, world.index);

  const auto [d_before, d_before_p] = correlations(state.f, d);
  const auto [l_before, l_before_p] = correlations(state.f, l_now);
  const auto [probe_before, probe_before_p] = correlations(state.f, probe);

  RectifyConfig rcfg;
  rcfg.train.adam.learning_rate = config.rectify_lr;
  rcfg.train.max_epochs = config.rectify_epochs;
  rcfg.train.batch_size = config.batch_size;
  rcfg.train.seed = config.derived_seed("rectify-" + std::to_string(t));
  rcfg.forget_epsilon = config.forget_epsilon;
  rcfg.workers = config.workers;

  std::vector<Model> models;
  models.push_back(state.f);
  models.insert(models.end(), state.pool.begin(), state.pool.end());
  models = rectify(std::move(models), d, l, rcfg);
  for (auto& m : models) m.lineage.round = t;
  Model f = models.front();
  std::vector<Model> pool(models.begin() + 1, models.end());
  save_models(run, t, f, pool);

  const auto [d_after, d_after_p] = correlations(f, d);
  const auto [l_after, l_after_p] = correlations(f, l_now);
  const auto [probe_after, probe_after_p] = correlations(f, probe);
  const bool forgetting = std::isfinite(d_before) && std::isfinite(d_after) && d_before - d_after > config.forget_epsilon;
  if (forgetting) log << "rectify: warning, SRCC on D fell from " << d_before << " to " << d_after << "\n";

  json pool_probe = json::array();
  for (const auto& h : pool) pool_probe.push_back(number(correlations(h, probe).first));

  const json gmad = read_json(run.round(t) / "gmad.json");
  const json labeling = read_json(run.round(t) / "labeling.json");
  json metrics = {
      {"round", t},
      {"target", "f" + std::to_string(t)},
      {"probe", {{"srcc", number(probe_after)}, {"plcc", number(probe_after_p)}}},
      {"probe_before", {{"srcc", number(probe_before)}, {"plcc", number(probe_before_p)}}},
      {"train_srcc", number(d_after)},
      {"pool_probe_srcc", pool_probe},
      {"gmad",
       {{"selected", gmad.at("selected")},
        {"pairs", gmad.at("pairs")},
        {"duplicates", gmad.at("duplicates")},
        {"labeled_images", current.size()},
        {"removal_rate", labeling.at("removal_rate")},
        {"rejected_subjects", labeling.at("rejected_subjects").size()},
        {"backend", labeling.at("backend")}}},
      {"cases", labeling.at("cases")},
      {"rectification",
       {{"labeled_total", all_labels.size()},
        {"srcc_on_L_before", number(l_before)},
        {"srcc_on_L_after", number(l_after)},
        {"srcc_on_D_before", number(d_before)},
        {"srcc_on_D_after", number(d_after)},
        {"forgetting_warning", forgetting}}},
  };
  write_text_atomic(run.metrics(t), metrics.dump(2) + "\n");
  log << "rectify: round " << t << " probe SRCC " << probe_before << " -> " << probe_after << ", SRCC on L(" << t
      << ") " << l_before << " -> " << l_after << "\n";
}

void run_rounds(const RunDir& run, const RunConfig& config, int rounds, std::ostream& log) {
  if (!std::filesystem::is_regular_file(run.labels("probe"))) step_synth(run, config);
  if (!std::filesystem::is_regular_file(run.model(0, kTarget))) step_train(run, config, log);
  if (!std::filesystem::is_regular_file(run.metrics(0))) step_prune(run, config, log);
  for (int t = run.completed_rounds() + 1; t <= rounds; ++t) {
    if (!std::filesystem::is_regular_file(run.ensembles(t))) step_ensembles(run, config, t);
    if (!std::filesystem::is_regular_file(run.scores(t))) step_score(run, config, t);
    if (!std::filesystem::is_regular_file(run.pairs(t))) step_gmad(run, config, t, log);
    if (!std::filesystem::is_regular_file(run.round_labels(t))) step_label(run, config, t, log);
    step_rectify(run, config, t, log);
  }
}

// ---------------------------------------------------------------------------
// evaluation steps

RankingResult step_tournament(const RunDir& run, const RunConfig& config, std::ostream& log) {
  const World world = load_world(run);
  const int r = run.completed_rounds();
  std::vector<Model> models;
  std::vector<std::string> ids;
  for (int t = 0; t <= r; ++t) {
    Model f = load_model(run.model(t, kTarget));
    f.id = "f" + std::to_string(t);
    ids.push_back(f.id);
    models.push_back(std::move(f));
  }
  const auto candidates = unlabeled_pool(world, labeled_before(run, r + 1));
  const ScoreMatrix scores = build_score_matrix(models, candidates);

  TournamentConfig tcfg;
  tcfg.pairs_per_level = config.tournament_pairs_per_level;
  tcfg.levels = config.levels();
  tcfg.round = 0;
  TournamentResult result = tournament_pairs(scores, tcfg);

  const auto raw = simulate_study(result.pairs, world.index, simulated_panel(config.panel_config()));
  const CleaningResult cleaned = reject_outliers(raw);
  LabeledSet labels;
  labels.role = LabelRole::Gmad;
  labels.round = 0;
  labels.entries = compute_mos(cleaned.ratings);
  attach_mos(result, labels);
  const RankingResult ranking = global_ranking(result.rated, ids);

  write_pairs(run.tournament() / "pairs.jsonl", result.pairs);
  write_ratings(run.tournament() / "ratings.jsonl", cleaned.ratings);
  write_labels(run.tournament() / "labels.jsonl", labels);
  write_rankings_csv(run.rankings(), ranking);
  log << "tournament: " << result.competitions << " competitions, " << result.pairs.size() << " pairs, "
      << result.rated.size() << " rated\n";
  return ranking;
}

std::vector<SpottingRow> step_ablation(const RunDir& run, const RunConfig& config, std::ostream& log) {
  const World world = load_world(run);
  const Model f = load_model(run.model(0, kTarget));
  const std::vector<Model> pool = load_pool(run.pool_manifest(0));
  const ScoreMatrix committee = build_score_matrix(pool, world.pool);

  std::vector<EnsembleSpec> specs;
  if (std::filesystem::is_regular_file(run.ensembles(1))) {
    specs = load_ensembles(run.ensembles(1), pool.size());
  } else {
    specs = sample_ensembles(pool.size(), config.ensemble_size, config.ensembles, config.derived_seed("ensembles-1"));
  }
  const ScoreMatrix ens = ensemble_scores(specs, committee);
  const std::vector<double> target = predict_mos(f, world.pool);
  GmadSetConfig gcfg;
  gcfg.levels = config.levels();
  gcfg.k = config.k;
  gcfg.round = 1;
  const GmadSet set = assemble_gmad_set(Contestant{kTarget, target}, ens, gcfg);

  std::vector<double> mos;
  mos.reserve(world.pool.size());
  for (const auto& s : world.pool) mos.push_back(oracle_quality(s));
  const auto d = examples_of(world.train_labels, world.index);

  SpottingInputs in;
  in.f = &f;
  in.committee = &committee;
  in.pool = world.pool;
  in.mos = mos;
  in.labeled = d;
  in.gmad_pairs = set.pairs;
  in.budget = config.ablation_budget;
  in.seed = config.derived_seed("ablation");
  in.rsal.train = config.train_config();
  const auto rows = benchmark_spotting(in);
  write_ablation_csv(run.ablation(), rows);
  for (const auto& row : rows) log << "ablation: " << row.selector << " SRCC " << row.srcc << "\n";
  return rows;
}

void step_report(const RunDir& run) { write_text_atomic(run.report(), build_report(run.root())); }

}  // namespace selfgmad
