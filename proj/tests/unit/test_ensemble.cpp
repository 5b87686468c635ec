#include <doctest.h>

#include <algorithm>
#include <set>

#include "scratch.hpp"
#include "selfgmad/ensemble.hpp"
#include "selfgmad/rng.hpp"

using namespace selfgmad;

namespace {

ScoreMatrix random_pool(std::size_t m, std::size_t samples, std::uint64_t seed) {
  std::vector<std::string> models, ids;
  for (std::size_t j = 0; j < m; ++j) models.push_back("h" + std::to_string(j));
  for (std::size_t s = 0; s < samples; ++s) ids.push_back("s" + std::to_string(s));
  ScoreMatrix pool(models, ids);
  Rng rng(seed);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t s = 0; s < samples; ++s) pool.at(j, s) = 100.0 * rng.uniform();
  return pool;
}

}  // namespace

TEST_CASE("binomial coefficients") {
  CHECK(binomial(18, 8) == 43758);
  CHECK(binomial(5, 0) == 1);
  CHECK(binomial(5, 5) == 1);
  CHECK(binomial(4, 5) == 0);
  CHECK(binomial(200, 100) == UINT64_MAX);
}

TEST_CASE("120 distinct subsets of size 8 from 18") {
  const auto specs = sample_ensembles(18, 8, 120, 7);
  REQUIRE(specs.size() == 120);
  std::set<std::vector<std::size_t>> distinct;
  for (const auto& spec : specs) {
    CHECK(spec.size() == 8);
    CHECK(std::is_sorted(spec.members.begin(), spec.members.end()));
    CHECK(spec.members.back() < 18);
    distinct.insert(spec.members);
  }
  CHECK(distinct.size() == 120);
  CHECK(specs.front().id == "g001");
  CHECK(specs.back().id == "g120");
  CHECK(sample_ensembles(18, 8, 120, 7) == specs);
  CHECK(sample_ensembles(18, 8, 120, 8) != specs);
}

TEST_CASE("dense requests enumerate exhaustively") {
  const auto full = sample_ensembles(5, 5, 1, 1);
  REQUIRE(full.size() == 1);
  CHECK(full[0].members == std::vector<std::size_t>{0, 1, 2, 3, 4});
  const auto all = sample_ensembles(6, 3, 20, 2);
  std::set<std::vector<std::size_t>> distinct;
  for (const auto& s : all) distinct.insert(s.members);
  CHECK(distinct.size() == 20);
  CHECK_THROWS_AS(sample_ensembles(4, 2, 7, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_ensembles(4, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_ensembles(4, 5, 1, 1), std::invalid_argument);
}

TEST_CASE("membership row") {
  EnsembleSpec spec{"g001", {1, 3}};
  CHECK(spec.membership(5) == std::vector<std::uint8_t>{0, 1, 0, 1, 0});
}

TEST_CASE("ensemble score is the member mean") {
  ScoreMatrix pool({"a", "b", "c"}, {"x"});
  pool.at(0, 0) = 20;
  pool.at(1, 0) = 40;
  pool.at(2, 0) = 60;
  CHECK(ensemble_predict({"g", {0, 1, 2}}, pool, 0) == doctest::Approx(40.0));
  CHECK(ensemble_predict({"g", {1}}, pool, 0) == 40.0);
  CHECK_THROWS(ensemble_predict({"g", {2, 1}}, pool, 0));
  CHECK_THROWS(ensemble_predict({"g", {3}}, pool, 0));
  CHECK_THROWS(ensemble_predict({"g", {}}, pool, 0));
}

TEST_CASE("ensemble matrix agrees with a direct mean and stays inside member range") {
  const auto pool = random_pool(18, 300, 5);
  const auto specs = sample_ensembles(18, 8, 40, 3);
  const auto scores = ensemble_scores(specs, pool);
  REQUIRE(scores.models() == 40);
  REQUIRE(scores.sample_ids() == pool.sample_ids());
  for (std::size_t e = 0; e < specs.size(); ++e) {
    for (std::size_t s = 0; s < pool.samples(); ++s) {
      double sum = 0, lo = 1e9, hi = -1e9;
      for (auto j : specs[e].members) {
        sum += pool.at(j, s);
        lo = std::min(lo, pool.at(j, s));
        hi = std::max(hi, pool.at(j, s));
      }
      REQUIRE(std::abs(scores.at(e, s) - sum / 8.0) < 1e-9);
      REQUIRE(scores.at(e, s) >= lo - 1e-12);
      REQUIRE(scores.at(e, s) <= hi + 1e-12);
    }
  }
  // s = m reproduces the pool mean, s = 1 a single member.
  const auto everyone = ensemble_scores(sample_ensembles(18, 18, 1, 0), pool);
  const auto singles = sample_ensembles(18, 1, 18, 0);
  const auto single_scores = ensemble_scores(singles, pool);
  for (std::size_t s = 0; s < pool.samples(); ++s) {
    double sum = 0;
    for (std::size_t j = 0; j < 18; ++j) sum += pool.at(j, s);
    CHECK(everyone.at(0, s) == doctest::Approx(sum / 18.0));
    for (std::size_t e = 0; e < singles.size(); ++e)
      CHECK(single_scores.at(e, s) == pool.at(singles[e].members[0], s));
  }
}

TEST_CASE("ensembles round-trip through jsonl") {
  const auto specs = sample_ensembles(18, 8, 12, 9);
  const auto dir = scratch_dir("ensemble_io");
  write_ensembles(dir / "e.jsonl", specs);
  CHECK(load_ensembles(dir / "e.jsonl", 18) == specs);
  CHECK_THROWS(load_ensembles(dir / "e.jsonl", 5));
}
