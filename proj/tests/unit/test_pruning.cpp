#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "scratch.hpp"
#include "selfgmad/evaluation.hpp"
#include "selfgmad/pruning.hpp"

using namespace selfgmad;

namespace {

Model random_model(std::vector<std::size_t> widths, std::uint64_t seed) {
  Model m = init_model(widths, seed);
  Rng rng(seed * 3 + 1);
  for (auto& layer : m.layers) {
    for (auto& b : layer.bias) b = rng.normal(0, 0.2);
    for (auto& s : layer.scale) s = rng.uniform(0.2, 1.8);
  }
  return m;
}

struct Batch {
  std::vector<std::vector<double>> xs;
  std::vector<Example> examples;
};

Batch random_batch(std::size_t dim, std::size_t n, std::uint64_t seed) {
  Batch b;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (auto& v : x) v = rng.normal();
    b.xs.push_back(x);
  }
  for (auto& x : b.xs) b.examples.push_back({x, rng.uniform(0, 100)});
  return b;
}

std::vector<std::vector<std::uint8_t>> unit_masks(const Model& m) {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) out.push_back(m.layers[l].unit_mask);
  return out;
}

}  // namespace

TEST_CASE("criterion names round-trip") {
  for (auto c : kAllCriteria) CHECK(parse_criterion(criterion_name(c)) == c);
  CHECK_FALSE(parse_criterion("Magic"));
  CHECK(granularity_of(PruneCriterion::OMP) == Granularity::Weight);
  CHECK(granularity_of(PruneCriterion::FPGM) == Granularity::Unit);
}

TEST_CASE("OMP at 0.5 masks the smallest magnitudes") {
  Model m = init_model(std::vector<std::size_t>{2, 4, 1}, 1);
  const std::vector<double> w = {0.1, -0.4, -0.2, 0.3, -0.3, 0.2, 0.4, -0.1};
  m.layers[0].weight = w;
  const Model p = prune(m, {PruneCriterion::OMP, 0.5, {}});
  for (std::size_t k = 0; k < w.size(); ++k) {
    const bool small = std::abs(w[k]) < 0.25;
    CHECK(p.layers[0].weight_mask[k] == (small ? 0 : 1));
    if (small) CHECK(p.layers[0].weight[k] == 0.0);
  }
  // output layer untouched
  CHECK(masked_prunable_weights(p) == 4);
  for (auto mk : p.layers[1].weight_mask) CHECK(mk == 1);
}

TEST_CASE("tiny ratio masks nothing and keeps outputs") {
  const Model m = random_model({6, 10, 5, 1}, 2);
  const auto batch = random_batch(6, 20, 3);
  for (auto c : kAllCriteria) {
    PruneSpec spec{c, 1e-6, batch.examples};
    const Model p = prune(m, spec);
    CHECK(masked_prunable_weights(p) == 0);
    for (const auto& x : batch.xs) CHECK(forward(p, x) == forward(m, x));
  }
}

TEST_CASE("every criterion matches its brute-force recomputation") {
  std::size_t ambiguous_cases = 0, checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Model m = random_model({8, 16, 8, 1}, 100 + seed);
    const auto batch = random_batch(8, 32, 200 + seed);
    for (double ratio : {0.3, 0.5, 0.7}) {
      // weight level
      const Model omp = prune(m, {PruneCriterion::OMP, ratio, {}});
      const auto expected = oracle::omp_masks(m, ratio);
      for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) CHECK(omp.layers[l].weight_mask == expected[l]);
      CHECK(masked_prunable_weights(omp) == static_cast<std::size_t>(std::floor(ratio * prunable_weights(m))));

      for (auto c : {PruneCriterion::L1Filter, PruneCriterion::L2Filter, PruneCriterion::TaylorFO,
                     PruneCriterion::Slimming, PruneCriterion::FPGM}) {
        PruneSpec spec{c, ratio, c == PruneCriterion::TaylorFO ? batch.examples : std::vector<Example>{}};
        const Model p = prune(m, spec);
        const auto importance = oracle::unit_importance(m, c, batch.examples);
        bool ambiguous = false;
        const auto want = oracle::expected_unit_masks(m, importance, ratio, 1e-6, &ambiguous);
        ++checked;
        if (ambiguous) {
          ++ambiguous_cases;
          continue;
        }
        INFO(criterion_name(c), " ratio ", ratio, " seed ", seed);
        CHECK(unit_masks(p) == want);
        const auto counts = masked_units(p);
        CHECK(counts[0] == static_cast<std::size_t>(std::floor(ratio * 16)));
        CHECK(counts[1] == static_cast<std::size_t>(std::floor(ratio * 8)));
        // outgoing columns of a masked unit are masked too
        for (std::size_t l = 0; l + 1 < p.layers.size(); ++l)
          for (std::size_t j = 0; j < p.layers[l].out; ++j)
            if (!p.layers[l].unit_mask[j])
              for (std::size_t o = 0; o < p.layers[l + 1].out; ++o) CHECK(!p.layers[l + 1].live(o, j));
      }
    }
  }
  CHECK(ambiguous_cases * 20 < checked);
}

TEST_CASE("unit scores agree numerically with the oracle") {
  const Model m = random_model({8, 16, 8, 1}, 7);
  const auto batch = random_batch(8, 16, 8);
  for (auto c : {PruneCriterion::L1Filter, PruneCriterion::L2Filter, PruneCriterion::TaylorFO, PruneCriterion::Slimming,
                 PruneCriterion::FPGM}) {
    PruneSpec spec{c, 0.5, batch.examples};
    const auto got = unit_scores(m, spec);
    const auto want = oracle::unit_importance(m, c, batch.examples);
    for (std::size_t l = 0; l < got.size(); ++l)
      for (std::size_t j = 0; j < got[l].size(); ++j)
        CHECK(got[l][j] == doctest::Approx(want[l][j]).epsilon(1e-5).scale(1e-9));
  }
  CHECK_THROWS(unit_scores(m, {PruneCriterion::OMP, 0.5, {}}));
}

TEST_CASE("unit pruning always leaves a live unit") {
  const Model m = random_model({4, 2, 1}, 9);
  const Model p = prune(m, {PruneCriterion::L1Filter, 0.99, {}});
  CHECK(masked_units(p)[0] == 1);
}

TEST_CASE("prune spec validation") {
  const Model m = random_model({4, 3, 1}, 10);
  CHECK_THROWS(prune(m, {PruneCriterion::L1Filter, 0.0, {}}));
  CHECK_THROWS(prune(m, {PruneCriterion::L1Filter, 1.0, {}}));
  CHECK_THROWS(prune(m, {PruneCriterion::TaylorFO, 0.5, {}}));
  Model copy = m;
  CHECK_THROWS(mask_unit(copy, 1, 0));
}

TEST_CASE("pruned lineage and ids") {
  Model m = random_model({4, 6, 1}, 11);
  m.id = "f";
  const Model p = prune(m, {PruneCriterion::FPGM, 0.7, {}});
  CHECK(p.id == "f-FPGM70");
  CHECK(p.lineage.parent == "f");
  CHECK(p.lineage.criterion == "FPGM");
  CHECK(p.lineage.ratio == 0.7);
}

TEST_CASE("geometric median: single point and equilateral triangle") {
  std::vector<std::vector<double>> one{{1.5, -2.0, 3.0}};
  CHECK(geometric_median(one) == one[0]);
  std::vector<std::vector<double>> tri;
  for (int k = 0; k < 3; ++k) {
    const double a = 2 * std::numbers::pi * k / 3 + 0.3;
    tri.push_back({2 + std::cos(a), -1 + std::sin(a)});
  }
  const auto g = geometric_median(tri);
  CHECK(std::abs(g[0] - 2) < 1e-6);
  CHECK(std::abs(g[1] + 1) < 1e-6);
  CHECK_THROWS(geometric_median(std::vector<std::vector<double>>{}));
}

TEST_CASE("geometric median objective matches grid search on 2-D instances") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> pts(20);
    for (auto& p : pts) p = {rng.normal(0, 3), rng.normal(0, 1)};
    const auto g = geometric_median(pts);
    const double grid = oracle::grid_search_median_2d(pts);
    CHECK(std::abs(sum_of_distances(pts, g) - grid) < 1e-6);
  }
}

TEST_CASE("geometric median on a data point (dominant vertex)") {
  // One point carries enough multiplicity that the median sits on it.
  std::vector<std::vector<double>> pts{{0, 0}, {0, 0}, {0, 0}, {0, 0}, {1, 0}, {0, 1}, {-1, 0}};
  const auto g = geometric_median(pts);
  CHECK(std::abs(g[0]) < 1e-9);
  CHECK(std::abs(g[1]) < 1e-9);
  CHECK(std::abs(sum_of_distances(pts, g) - oracle::grid_search_median_2d(pts)) < 1e-6);
}

TEST_CASE("pruned pool: 18 members, exact budgets, recovered accuracy") {
  const auto batch = random_batch(6, 300, 13);
  std::vector<Example> data;
  for (const auto& x : batch.xs) data.push_back({x, 50 + 30 * std::tanh(x[0] - 0.5 * x[1]) + 5 * x[2]});
  Model f = init_model(std::vector<std::size_t>{6, 12, 6, 1}, 14);
  TrainConfig tc;
  tc.max_epochs = 30;
  tc.adam.learning_rate = 3e-3;
  f = train(f, data, tc).model;
  f.scale_map = fit_scale_map(f, data);

  PoolConfig cfg;
  cfg.finetune.max_epochs = 4;
  cfg.slimming_warmup.max_epochs = 1;
  cfg.taylor_batch = 64;
  cfg.workers = 1;
  cfg.srcc_floor = 0.5;
  const PrunedPool pool = build_pruned_pool(f, data, cfg);
  REQUIRE(pool.members.size() == 18);
  std::set<std::string> ids;
  for (std::size_t j = 0; j < pool.members.size(); ++j) {
    const Model& h = pool.members[j];
    ids.insert(h.id);
    const double ratio = cfg.ratios[j % 3];
    const auto criterion = cfg.criteria[j / 3];
    CHECK(h.lineage.criterion == criterion_name(criterion));
    CHECK(h.lineage.ratio == ratio);
    if (criterion == PruneCriterion::OMP) {
      CHECK(masked_prunable_weights(h) == static_cast<std::size_t>(std::floor(ratio * prunable_weights(f))));
    } else {
      CHECK(masked_units(h)[0] == static_cast<std::size_t>(std::floor(ratio * 12)));
      CHECK(masked_units(h)[1] == static_cast<std::size_t>(std::floor(ratio * 6)));
    }
    // fine-tuning kept the masks
    double masked_l1 = 0;
    for (const auto& layer : h.layers)
      for (std::size_t k = 0; k < layer.weight.size(); ++k)
        if (!layer.weight_mask[k]) masked_l1 += std::abs(layer.weight[k]);
    CHECK(masked_l1 == 0.0);
    CHECK(h.scale_map.fitted);
    // The toy net is too small for a tight recovery bound; only the flag is checked.
    CHECK(pool.flagged[j] == (pool.srcc_on_d[j] < cfg.srcc_floor));
    CHECK(pool.srcc_on_d[j] > 0.0);
  }
  CHECK(ids.size() == 18);
}

TEST_CASE("pool manifest round-trip") {
  std::vector<Model> members;
  for (int i = 0; i < 3; ++i) {
    Model m = random_model({3, 4, 1}, 20 + i);
    m.id = "h0" + std::to_string(i + 1);
    members.push_back(m);
  }
  const auto dir = scratch_dir("pool_manifest");
  std::vector<std::string> paths;
  for (const auto& m : members) {
    paths.push_back(m.id + ".json");
    save_model(dir / paths.back(), m);
  }
  write_pool_manifest(dir / "pool.json", members, paths);
  const auto back = load_pool(dir / "pool.json");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(model_to_json(back[i]) == model_to_json(members[i]));
}
