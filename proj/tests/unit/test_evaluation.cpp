#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "oracles.hpp"
#include "scratch.hpp"
#include "selfgmad/evaluation.hpp"
#include "selfgmad/rng.hpp"

using namespace selfgmad;

TEST_CASE("worked correlation examples") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  const std::vector<double> swapped{1, 3, 2, 5, 4};
  CHECK(srcc(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(srcc(a, rev) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(srcc(a, swapped) - 0.8) < 1e-5);
  const std::vector<double> p{1, 2, 3}, q{1, 2, 4};
  CHECK(std::abs(plcc(p, q) - 0.98198) < 1e-5);
  std::vector<double> affine, neg;
  for (double v : swapped) {
    affine.push_back(2 * v + 7);
    neg.push_back(-v);
  }
  CHECK(plcc(affine, swapped) == doctest::Approx(1.0));
  CHECK(plcc(neg, swapped) == doctest::Approx(-1.0));
}

TEST_CASE("correlation preconditions") {
  const std::vector<double> one{1}, two{1, 2}, flat{3, 3};
  CHECK_THROWS(srcc(one, one));
  CHECK_THROWS(srcc(two, one));
  CHECK_THROWS(plcc(flat, two));
  CHECK_THROWS(srcc(two, flat));
}

TEST_CASE("average ranks match counting") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v;
    for (int i = 0; i < 30; ++i) v.push_back(std::floor(10 * rng.uniform()));
    CHECK(average_ranks(v) == oracle::naive_ranks(v));
  }
  const std::vector<double> ties{10, 20, 20, 30};
  CHECK(average_ranks(ties) == std::vector<double>{1, 2.5, 2.5, 4});
}

TEST_CASE("srcc and plcc agree with long-double references") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 40; ++i) {
      a.push_back(std::round(20 * rng.uniform()));
      b.push_back(a.back() + 5 * rng.normal());
    }
    CHECK(std::abs(srcc(a, b) - oracle::naive_spearman(a, b)) < 1e-12);
    CHECK(std::abs(plcc(a, b) - oracle::naive_pearson(a, b)) < 1e-12);
    CHECK(srcc(a, b) == doctest::Approx(srcc(b, a)));
  }
}

TEST_CASE("srcc is invariant under monotone transforms") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> a, b, ta;
    const double scale = 0.1 + rng.uniform();
    for (int i = 0; i < 25; ++i) {
      a.push_back(rng.normal());
      b.push_back(a.back() + rng.normal());
      ta.push_back(std::exp(scale * a.back()) + std::pow(a.back(), 3));
    }
    REQUIRE(std::abs(srcc(ta, b) - srcc(a, b)) < 1e-12);
  }
}

TEST_CASE("tournament covers every competition, level and role") {
  Rng rng(4);
  std::vector<std::string> ids;
  for (int s = 0; s < 400; ++s) ids.push_back("s" + std::to_string(s));
  ScoreMatrix scores({"f0", "f1", "f2"}, ids);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t s = 0; s < ids.size(); ++s) scores.at(m, s) = 100 * rng.uniform();
  TournamentConfig cfg;
  cfg.pairs_per_level = 4;
  const auto t = tournament_pairs(scores, cfg);
  CHECK(t.competitions == 3);
  CHECK(t.pairs.size() == 3 * 5 * 4);
  std::map<std::pair<std::string, std::string>, int> by_role;
  for (const auto& p : t.pairs) ++by_role[{p.attacker, p.defender}];
  CHECK(by_role.size() == 6);
  for (const auto& [k, v] : by_role) CHECK(v == 10);
}

TEST_CASE("ranking aggregation by hand") {
  // f1 attacks f0 and wins 30 points; f0 attacks f1 and loses 10.
  std::vector<RatedPair> rated;
  GmadPair a;
  a.attacker = "f1";
  a.defender = "f0";
  rated.push_back({a, 70, 40});
  GmadPair b;
  b.attacker = "f0";
  b.defender = "f1";
  rated.push_back({b, 45, 55});
  const auto r = global_ranking(rated, {"f0", "f1"});
  CHECK(r.raw_aggressiveness[0] == doctest::Approx(-0.1));
  CHECK(r.raw_aggressiveness[1] == doctest::Approx(0.3));
  CHECK(r.raw_resistance[0] == doctest::Approx(-0.3));
  CHECK(r.raw_resistance[1] == doctest::Approx(0.1));
  CHECK(r.aggressiveness[0] == doctest::Approx(-1.0));
  CHECK(r.aggressiveness[1] == doctest::Approx(1.0));
  CHECK(r.resistance[1] == doctest::Approx(1.0));
  CHECK(std::isnan(r.gap_matrix[0][0]));
  CHECK(r.gap_matrix[1][0] == doctest::Approx(0.3));
  const auto flat = global_ranking({}, {"f0", "f1"});
  CHECK(flat.aggressiveness == std::vector<double>{0, 0});
  GmadPair c;
  c.attacker = "zz";
  c.defender = "f0";
  std::vector<RatedPair> bad{{c, 1, 2}};
  CHECK_THROWS(global_ranking(bad, {"f0"}));
}

TEST_CASE("attach_mos drops pairs with unlabeled images") {
  TournamentResult t;
  GmadPair p;
  p.x_id = "a";
  p.y_id = "b";
  t.pairs.push_back(p);
  p.y_id = "c";
  t.pairs.push_back(p);
  LabeledSet labels;
  labels.entries["a"] = {60, 0, 1};
  labels.entries["b"] = {20, 0, 1};
  attach_mos(t, labels);
  REQUIRE(t.rated.size() == 1);
  CHECK(t.rated[0].mos_x == 60);
}

TEST_CASE("report tolerates missing inputs and renders tables") {
  const auto dir = scratch_dir("evaluation_report");
  const auto empty = build_report(dir);
  CHECK(empty.find("## Global ranking") != std::string::npos);
  std::filesystem::create_directories(dir / "rounds" / "0");
  {
    std::ofstream out(dir / "rounds" / "0" / "metrics.json");
    out << R"({"round":0,"target":"f0","probe":{"srcc":0.9,"plcc":0.8}})";
  }
  {
    std::ofstream out(dir / "rankings.csv");
    out << "model_id,aggressiveness,resistance\nf0,-1,-1\n";
  }
  const auto md = build_report(dir);
  CHECK(md.find("| 0 | f0 | 0.9000 | 0.8000 |") != std::string::npos);
  CHECK(md.find("| f0 | -1 | -1 |") != std::string::npos);
  CHECK(build_report(dir) == md);
}
