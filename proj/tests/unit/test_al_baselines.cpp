#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "scratch.hpp"
#include "selfgmad/al_baselines.hpp"
#include "selfgmad/gmad.hpp"
#include "selfgmad/rng.hpp"

using namespace selfgmad;

namespace {

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(1000 + i));
  return ids;
}

}  // namespace

TEST_CASE("random selection is distinct, bounded and seeded") {
  const auto ids = make_ids(50);
  const auto a = select_random(ids, 20, 3);
  CHECK(a.size() == 20);
  CHECK(std::set<std::string>(a.begin(), a.end()).size() == 20);
  CHECK(select_random(ids, 20, 3) == a);
  CHECK(select_random(ids, 20, 4) != a);
  CHECK(select_random(ids, 500, 3).size() == 50);
}

TEST_CASE("top_by_score breaks ties by id") {
  const std::vector<std::string> ids{"d", "b", "c", "a"};
  const std::vector<double> scores{1, 5, 5, 0};
  CHECK(top_by_score(ids, scores, 2) == std::vector<std::string>{"b", "c"});
  CHECK(top_by_score(ids, scores, 3) == std::vector<std::string>{"b", "c", "d"});
}

TEST_CASE("qbc score is the committee variance") {
  ScoreMatrix c({"h1", "h2", "h3"}, {"a", "b"});
  c.at(0, 0) = 10;
  c.at(1, 0) = 20;
  c.at(2, 0) = 30;
  c.at(0, 1) = c.at(1, 1) = c.at(2, 1) = 7;
  const auto v = qbc_scores(c);
  CHECK(v[0] == doctest::Approx(200.0 / 3.0));
  CHECK(v[1] == 0.0);
  CHECK(select_qbc(c, 1) == std::vector<std::string>{"a"});
}

TEST_CASE("emcm matches a finite-difference reference") {
  const std::vector<std::size_t> widths{6, 5, 1};
  const Model f = init_model(widths, 3);
  const auto pool = synth_pool(12, 6, 4, BiasSpec{});
  std::vector<std::string> ids;
  for (const auto& s : pool) ids.push_back(s.id);
  ScoreMatrix committee({"h1", "h2"}, ids);
  Rng rng(5);
  for (std::size_t s = 0; s < pool.size(); ++s) {
    committee.at(0, s) = 100 * rng.uniform();
    committee.at(1, s) = 100 * rng.uniform();
  }
  const auto got = emcm_scores(f, committee, pool);
  for (std::size_t s = 0; s < pool.size(); ++s) {
    const double fx = predict_mos(f, pool[s].features);
    const double dev = (std::abs(fx - committee.at(0, s)) + std::abs(fx - committee.at(1, s))) / 2;
    const auto g = oracle::numeric_output_gradient(f, pool[s].features);
    double norm = 0;
    for (double v : g) norm += v * v;
    CHECK(got[s] == doctest::Approx(dev * std::sqrt(norm)).epsilon(1e-5));
  }
  CHECK(select_emcm(f, committee, pool, 3).size() == 3);
}

TEST_CASE("residual model halves hidden widths") {
  const std::vector<std::size_t> widths{6, 8, 4, 1};
  const Model f = init_model(widths, 3);
  const auto pool = synth_pool(40, 6, 4, BiasSpec{});
  std::vector<Example> labeled;
  for (const auto& s : pool) labeled.push_back({s.features, oracle_quality(s)});
  RsalConfig cfg;
  cfg.train.max_epochs = 2;
  const Model aux = train_residual_model(f, labeled, cfg);
  CHECK(aux.widths() == std::vector<std::size_t>{6, 4, 2, 1});
  const auto picked = select_rsal(f, labeled, pool, 10, cfg);
  CHECK(picked.size() == 10);
  CHECK(select_rsal(f, labeled, pool, 10, cfg) == picked);
}

TEST_CASE("greedy max-min by hand") {
  const std::vector<double> points{0, 1, 2, 10};
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  CHECK(greedy_max_min(points, 1, ids, 3) == std::vector<std::size_t>{2, 3, 0});
  CHECK(greedy_max_min(points, 1, ids, 9).size() == 4);
}

TEST_CASE("gs spaces") {
  CHECK(parse_gs_space("joint") == GsSpace::Joint);
  CHECK(gs_space_name(GsSpace::Input) == "input");
  CHECK_THROWS(parse_gs_space("sideways"));
  const auto pool = synth_pool(60, 8, 2, BiasSpec{});
  std::vector<double> outputs;
  for (const auto& s : pool) outputs.push_back(oracle_quality(s));
  for (auto space : {GsSpace::Input, GsSpace::Output, GsSpace::Joint}) {
    const auto picked = select_gs(pool, outputs, 15, space);
    CHECK(std::set<std::string>(picked.begin(), picked.end()).size() == 15);
  }
  // In output space the two extremes are picked straight after the centre.
  const auto out = select_gs(pool, outputs, 3, GsSpace::Output);
  const auto [lo, hi] = std::minmax_element(outputs.begin(), outputs.end());
  std::set<std::string> extremes{pool[lo - outputs.begin()].id, pool[hi - outputs.begin()].id};
  CHECK(extremes.count(out[1]) == 1);
  CHECK(extremes.count(out[2]) == 1);
}

TEST_CASE("gmad sample ids follow objective order without repeats") {
  std::vector<GmadPair> pairs(3);
  pairs[0] = {"p1", "a", "b", "g", "f", 0, 1, 10.0, 1};
  pairs[1] = {"p2", "c", "a", "g", "f", 1, 1, 30.0, 1};
  pairs[2] = {"p0", "d", "e", "g", "f", 2, 1, 10.0, 1};
  CHECK(gmad_sample_ids(pairs, 10) == std::vector<std::string>{"c", "a", "d", "e", "b"});
  CHECK(gmad_sample_ids(pairs, 3) == std::vector<std::string>{"c", "a", "d"});
}

TEST_CASE("spotting row restricts to the selection") {
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  const std::vector<double> scores{1, 2, 3, 4}, mos{1, 3, 2, 4};
  const std::vector<std::string> sel{"a", "b", "c"};
  const auto row = spotting_row("x", ids, scores, mos, sel, 9);
  CHECK(row.srcc == doctest::Approx(0.5));
  CHECK(row.budget == 3);
  CHECK(row.seed == 9);
}

TEST_CASE("benchmark produces every selector and round-trips") {
  const std::vector<std::size_t> widths{8, 6, 1};
  const Model f = init_model(widths, 1);
  const auto pool = synth_pool(300, 8, 6, BiasSpec{});
  std::vector<std::string> ids;
  std::vector<double> mos;
  for (const auto& s : pool) {
    ids.push_back(s.id);
    mos.push_back(oracle_quality(s));
  }
  ScoreMatrix committee({"h1", "h2", "h3"}, ids);
  std::vector<double> fs;
  for (const auto& s : pool) fs.push_back(predict_mos(f, s.features));
  Rng rng(2);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t s = 0; s < pool.size(); ++s) committee.at(j, s) = std::clamp(fs[s] + 5 * rng.normal(), 0.0, 100.0);
  const auto train = synth_pool(60, 8, 7, BiasSpec{}, {"D"});
  std::vector<Example> labeled;
  for (const auto& s : train) labeled.push_back({s.features, oracle_quality(s)});
  const auto gset = assemble_gmad_set({"f", fs}, committee, GmadSetConfig{});

  SpottingInputs in;
  in.f = &f;
  in.committee = &committee;
  in.pool = pool;
  in.mos = mos;
  in.labeled = labeled;
  in.gmad_pairs = gset.pairs;
  in.budget = 40;
  in.rsal.train.max_epochs = 2;
  const auto rows = benchmark_spotting(in);
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.selector);
  CHECK(names == std::vector<std::string>{"random", "qbc", "emcm", "rsal", "gs", "gmad", "all"});
  CHECK(rows.back().budget == 300);

  const auto dir = scratch_dir("al_io");
  write_ablation_csv(dir / "ablation.csv", rows);
  const auto back = load_ablation_csv(dir / "ablation.csv");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].selector == rows[i].selector);
    CHECK(back[i].srcc == doctest::Approx(rows[i].srcc).epsilon(1e-6));
    CHECK(back[i].budget == rows[i].budget);
  }
}
