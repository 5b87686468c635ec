#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scratch.hpp"
#include "selfgmad/datapool.hpp"
#include "selfgmad/error.hpp"
#include "selfgmad/rng.hpp"
#include "selfgmad/score_matrix.hpp"

using namespace selfgmad;

namespace {

std::size_t in_corner(const std::vector<Sample>& pool, double t) {
  return static_cast<std::size_t>(std::count_if(pool.begin(), pool.end(), [t](const Sample& s) {
    return (*s.latents)[Attribute::Noise] > t && (*s.latents)[Attribute::Blur] > t;
  }));
}

Latents random_latents(Rng& rng) {
  Latents l;
  for (auto& v : l.values) v = rng.uniform();
  return l;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("uniform pool of 100000 has flat marginals") {
  const auto pool = synth_pool(100000, 16, 7, BiasSpec{});
  REQUIRE(pool.size() == 100000);
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    std::array<std::size_t, 10> bins{};
    for (const auto& s : pool) {
      const double v = s.latents->values[a];
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      ++bins[std::min<std::size_t>(9, static_cast<std::size_t>(v * 10))];
    }
    const auto [lo, hi] = std::minmax_element(bins.begin(), bins.end());
    CHECK(static_cast<double>(*hi) / static_cast<double>(*lo) <= 1.5);
  }
}

TEST_CASE("single-sample pool has finite features") {
  const auto pool = synth_pool(1, 8, 1, BiasSpec::parse("noise>0.5@0.1"));
  REQUIRE(pool.size() == 1);
  CHECK(pool[0].features.size() == 8);
  for (double v : pool[0].features) CHECK(std::isfinite(v));
}

TEST_CASE("bias spec under-represents its region") {
  const auto spec = BiasSpec::parse("noise>0.6&blur>0.6@0.05");
  CHECK(spec.region.size() == 2);
  CHECK(spec.factor == 0.05);
  CHECK(spec.region_mass() == doctest::Approx(0.16));
  const auto biased = synth_pool(5000, 16, 3, spec);
  const auto uniform = synth_pool(5000, 16, 3, BiasSpec{});
  CHECK(in_corner(biased, 0.6) < 50);
  const double unbiased_share = static_cast<double>(in_corner(uniform, 0.6)) / 5000.0;
  CHECK(unbiased_share == doctest::Approx(0.16).epsilon(0.15));
}

TEST_CASE("bias spec errors") {
  CHECK_THROWS(BiasSpec::parse("noise>0.6"));
  CHECK_THROWS(BiasSpec::parse("wobble>0.6@0.1"));
  CHECK_THROWS(synth_pool(10, 16, 1, BiasSpec::parse("noise>0.6&noise<0.4@0.1")));
  CHECK_THROWS(synth_pool(0, 16, 1, BiasSpec{}));
  CHECK_THROWS(synth_pool(10, 0, 1, BiasSpec{}));
  CHECK(BiasSpec::parse("uniform").is_uniform());
  CHECK(BiasSpec::parse("noise>0.6&blur>0.6@0.05").to_string() == "noise>0.6&blur>0.6@0.05");
}

TEST_CASE("generation is pure in its arguments") {
  const auto spec = BiasSpec::parse("noise>0.5&blur>0.5@0.005");
  const auto a = synth_pool(500, 16, 9, spec);
  const auto b = synth_pool(500, 16, 9, spec);
  CHECK(a == b);
  const auto c = synth_pool(500, 16, 10, spec);
  CHECK(a != c);
  const auto dir = scratch_dir("datapool_pure");
  write_samples(dir / "a.jsonl", a);
  write_samples(dir / "b.jsonl", b);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
}

TEST_CASE("embedding has a quarter of nuisance coordinates") {
  FeatureEmbedding e(16, kDefaultWorldSeed);
  CHECK(e.nuisance_dims() == 4);
  CHECK(e.informative_dims() == 12);
  CHECK_THROWS(FeatureEmbedding(5, 1));
}

TEST_CASE("oracle quality anchors") {
  Latents pristine;
  CHECK(oracle_quality(pristine) == 100.0);
  Latents worst;
  worst.values.fill(1.0);
  CHECK(oracle_quality(worst) <= 5.0);
  Sample bare{"x", {1.0}, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(oracle_quality(bare), DataError);
}

TEST_CASE("oracle quality is strictly decreasing in every attribute") {
  Rng rng(11);
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    for (int i = 0; i < 1000; ++i) {
      Latents l = random_latents(rng);
      Latents m = l;
      double u = rng.uniform(), v = rng.uniform();
      if (u == v) continue;
      l.values[a] = std::min(u, v);
      m.values[a] = std::max(u, v);
      REQUIRE(oracle_quality(m) < oracle_quality(l));
    }
  }
}

TEST_CASE("oracle quality is bounded and continuous") {
  Rng rng(12);
  for (int i = 0; i < 100000; ++i) {
    const Latents l = random_latents(rng);
    const double q = oracle_quality(l);
    REQUIRE(q >= 0.0);
    REQUIRE(q <= 100.0);
    if (i % 100 == 0) {
      Latents n = l;
      for (auto& v : n.values) v = std::clamp(v + 1e-9, 0.0, 1.0);
      CHECK(std::abs(oracle_quality(n) - q) < 1e-3);
    }
  }
}

TEST_CASE("oracle has a noise-blur interaction") {
  // The drop from adding blur depends on the noise level.
  auto q = [](double noise, double blur) {
    Latents l;
    l[Attribute::Noise] = noise;
    l[Attribute::Blur] = blur;
    return oracle_quality(l);
  };
  const double low_noise_drop = q(0.1, 0.2) / q(0.1, 0.9);
  const double high_noise_drop = q(0.9, 0.2) / q(0.9, 0.9);
  CHECK(high_noise_drop > 1.5 * low_noise_drop);
}

TEST_CASE("samples round-trip through jsonl") {
  const auto pool = synth_pool(50, 16, 5, BiasSpec{});
  const auto dir = scratch_dir("datapool_roundtrip");
  write_samples(dir / "s.jsonl", pool);
  const auto back = load_manifest(dir / "s.jsonl");
  CHECK(back == pool);
}

TEST_CASE("score csv round-trips and reports missing cells by row and column") {
  ScoreMatrix m({"f", "h01"}, {"a", "b"});
  m.at(0, 0) = 1.5;
  m.at(0, 1) = 2.25;
  m.at(1, 0) = -3.0;
  m.at(1, 1) = 1e-17;
  const auto dir = scratch_dir("datapool_scores");
  write_scores(dir / "scores.csv", m);
  CHECK(load_scores(dir / "scores.csv") == m);

  {
    std::ofstream out(dir / "bad.csv");
    out << "sample_id,f,h01\na,1,2\nb,3,\n";
  }
  try {
    load_scores(dir / "bad.csv");
    FAIL("missing cell accepted");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 3") != std::string::npos);
    CHECK(what.find("h01") != std::string::npos);
  }
}

TEST_CASE("image-only manifest needs a matching score file") {
  const auto dir = scratch_dir("datapool_manifest");
  {
    std::ofstream out(dir / "m.jsonl");
    out << R"({"id":"img1","features":null,"latents":null,"image_ref":"a.png"})" << '\n';
    out << R"({"id":"img2","image_ref":"b.png"})" << '\n';
  }
  CHECK_THROWS_AS(load_manifest(dir / "m.jsonl"), DataError);
  ScoreMatrix partial({"f"}, {"img1"});
  CHECK_THROWS_AS(load_manifest(dir / "m.jsonl", &partial), DataError);
  ScoreMatrix full({"f"}, {"img1", "img2"});
  const auto samples = load_manifest(dir / "m.jsonl", &full);
  REQUIRE(samples.size() == 2);
  CHECK(samples[1].image_ref == std::optional<std::string>("b.png"));
}

TEST_CASE("labels round-trip and reject out-of-range mos") {
  const auto pool = synth_pool(20, 16, 5, BiasSpec{});
  auto labels = oracle_labels(pool, LabelRole::Gmad, 2);
  const auto dir = scratch_dir("datapool_labels");
  write_labels(dir / "l.jsonl", labels);
  const auto back = load_labels(dir / "l.jsonl");
  CHECK(back.entries == labels.entries);
  CHECK(back.role == LabelRole::Gmad);
  CHECK(back.round == 2);
  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"sample_id":"a","mos":120,"std":0,"n":1,"role":"train-D"})" << '\n';
  }
  CHECK_THROWS_AS(load_labels(dir / "bad.jsonl"), DataError);
}

TEST_CASE("sample index lookups") {
  const auto a = synth_pool(5, 8, 1, BiasSpec{});
  const auto b = synth_pool(5, 8, 2, BiasSpec{}, {"D"});
  SampleIndex index(a);
  index.add(b);
  CHECK(index.size() == 10);
  CHECK(index.find(b[3].id) == &b[3]);
  CHECK(index.find("nope") == nullptr);
  CHECK_THROWS_AS(index.at("nope"), DataError);
  CHECK_THROWS_AS(index.add(a), DataError);
}
