#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "selfgmad/rng.hpp"

using namespace selfgmad;

TEST_CASE("fnv1a matches published test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("hex64 renders 16 lowercase digits") {
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xdeadbeefULL) == "00000000deadbeef");
  CHECK(hex64(UINT64_MAX) == "ffffffffffffffff");
}

TEST_CASE("mix_seed separates purposes") {
  std::set<std::uint64_t> seen;
  for (const char* p : {"S", "D", "probe", "panel", "prune"}) seen.insert(mix_seed(7, p));
  CHECK(seen.size() == 5);
  CHECK(mix_seed(7, "S") == mix_seed(7, "S"));
  CHECK(mix_seed(7, "S") != mix_seed(8, "S"));
}

TEST_CASE("same seed, same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng c(42), d(42);
  for (int i = 0; i < 100; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("uniform lies in [0,1) with the right mean") {
  Rng rng(1);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal has zero mean and unit variance") {
  Rng rng(2);
  const int n = 200000;
  double s = 0, q = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    q += z * z;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(q / n - mean * mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("index is uniform over its range") {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.index(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("shuffle permutes") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng rng(4);
  auto w = v;
  shuffle(w, rng);
  CHECK(w != v);
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}
