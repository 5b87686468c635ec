#include <doctest.h>

#include "scratch.hpp"
#include "selfgmad/error.hpp"
#include "selfgmad/run_dir.hpp"

using namespace selfgmad;

TEST_CASE("layout paths") {
  RunDir run("/r");
  CHECK(run.samples("S") == std::filesystem::path("/r/data/samples_S.jsonl"));
  CHECK(run.labels("probe") == std::filesystem::path("/r/data/labels_probe.jsonl"));
  CHECK(run.model(0, "h01") == std::filesystem::path("/r/rounds/0/models/h01.json"));
  CHECK(run.pairs(2) == std::filesystem::path("/r/rounds/2/pairs.jsonl"));
  CHECK(run.metrics(1) == std::filesystem::path("/r/rounds/1/metrics.json"));
}

TEST_CASE("atomic writes leave no temporary behind") {
  const auto dir = scratch_dir("run_dir_atomic");
  write_text_atomic(dir / "a" / "b.txt", "one\n");
  write_text_atomic(dir / "a" / "b.txt", "two\n");
  CHECK(read_text(dir / "a" / "b.txt") == "two\n");
  CHECK(!std::filesystem::exists(dir / "a" / "b.txt.tmp"));
  CHECK_THROWS_AS(read_text(dir / "missing"), DataError);
}

TEST_CASE("completed rounds count from one without gaps") {
  const auto dir = scratch_dir("run_dir_rounds");
  RunDir run(dir);
  CHECK(run.completed_rounds() == 0);
  write_text_atomic(run.metrics(1), "{}");
  write_text_atomic(run.metrics(3), "{}");
  CHECK(run.completed_rounds() == 1);
  write_text_atomic(run.metrics(2), "{}");
  CHECK(run.completed_rounds() == 3);
}

TEST_CASE("config drift is refused") {
  const auto dir = scratch_dir("run_dir_bind");
  RunDir run(dir);
  RunConfig c;
  bind_config(run, c);
  CHECK(std::filesystem::exists(run.manifest()));
  CHECK_NOTHROW(bind_config(run, c));
  RunConfig more_rounds = c;
  more_rounds.rounds = 4;
  CHECK_NOTHROW(bind_config(run, more_rounds));
  RunConfig other = c;
  other.k = 2;
  CHECK_THROWS_AS(bind_config(run, other), ConfigError);
  RunConfig broken = c;
  broken.k = 0;
  CHECK_THROWS_AS(bind_config(RunDir(dir / "fresh"), broken), ConfigError);
}
