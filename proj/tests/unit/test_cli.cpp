#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "scratch.hpp"
#include "selfgmad/loop.hpp"
#include "selfgmad/rng.hpp"

using namespace selfgmad;

namespace {

const char* kSmall = R"(seed = 3
dim = 8
pool_size = 500
train_size = 250
probe_size = 150
hidden = 8
train_epochs = 15
prune_finetune_epochs = 2
taylor_batch = 64
ensemble_size = 4
ensembles = 8
subjects = 5
rectify_epochs = 2
tournament_pairs_per_level = 2
ablation_budget = 20
rounds = 1
)";

int cli(const std::string& args) {
  const std::string cmd = std::string(SELFGMAD_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& extra = "") {
  const auto path = dir / "small.conf";
  std::ofstream out(path);
  out << kSmall << extra;
  return path;
}

std::string args(const std::filesystem::path& conf, const std::filesystem::path& run) {
  return "-c " + conf.string() + " -r " + run.string();
}

}  // namespace

TEST_CASE("configuration errors exit with 2") {
  const auto dir = scratch_dir("cli_config");
  const auto conf = write_config(dir);
  CHECK(cli("synth -c " + (dir / "missing.conf").string() + " -r " + (dir / "r").string()) == 2);
  CHECK(cli("synth " + args(conf, dir / "r") + " --set bogus=1") == 2);
  CHECK(cli("synth " + args(conf, dir / "r") + " --set k=0") == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("gmad " + args(conf, dir / "r")) == 2);  // missing --round
  // A run directory refuses a different config.
  CHECK(cli("synth " + args(conf, dir / "r")) == 0);
  CHECK(cli("synth " + args(conf, dir / "r") + " --seed 4") == 2);
}

TEST_CASE("missing inputs exit with 3") {
  const auto dir = scratch_dir("cli_data");
  const auto conf = write_config(dir);
  CHECK(cli("synth " + args(conf, dir / "r")) == 0);
  CHECK(cli("gmad -t 1 " + args(conf, dir / "r")) == 3);
  CHECK(cli("prune " + args(conf, dir / "r")) == 3);
  std::ofstream(dir / "r" / "data" / "samples_D.jsonl", std::ios::app) << "{broken\n";
  CHECK(cli("train " + args(conf, dir / "r")) == 3);
}

TEST_CASE("step-by-step commands match the round command") {
  const auto dir = scratch_dir("cli_steps");
  const auto conf = write_config(dir);
  const auto a = dir / "a", b = dir / "b";
  CHECK(cli("round " + args(conf, a) + " --workers 1") == 0);
  for (const char* step : {"synth", "train", "prune"}) REQUIRE(cli(std::string(step) + " " + args(conf, b)) == 0);
  for (const char* step : {"ensembles", "score", "gmad", "label", "rectify"})
    REQUIRE(cli(std::string(step) + " -t 1 " + args(conf, b)) == 0);
  for (const char* file : {"pairs.jsonl", "labels.jsonl", "metrics.json", "scores.csv", "ensembles.jsonl"}) {
    CHECK(read_text(a / "rounds" / "1" / file) == read_text(b / "rounds" / "1" / file));
  }
  CHECK(cli("tournament " + args(conf, a)) == 0);
  CHECK(cli("ablation " + args(conf, a)) == 0);
  CHECK(cli("report " + args(conf, a)) == 0);
  CHECK(std::filesystem::exists(a / "report.md"));
  CHECK(std::filesystem::exists(a / "rankings.csv"));
  CHECK(std::filesystem::exists(a / "ablation.csv"));
}

TEST_CASE("live labeling waits for the study, then matches oracle labels") {
  const auto dir = scratch_dir("cli_live");
  const auto oracle_conf = write_config(dir);
  const auto oracle_run = dir / "oracle";
  REQUIRE(cli("round " + args(oracle_conf, oracle_run)) == 0);

  std::filesystem::create_directories(dir / "live");
  const auto live_conf = write_config(dir / "live", "labeling = live\n");
  const auto live_run = dir / "live" / "run";
  CHECK(cli("round " + args(live_conf, live_run)) == 4);
  CHECK(cli("label -t 1 " + args(live_conf, live_run)) == 4);

  // Feed the study the ratings the simulated panel would give, in a scrambled order.
  const auto config = load_config(live_conf);
  const World world = load_world(RunDir(live_run));
  const auto pairs = load_pairs(live_run / "rounds" / "1" / "pairs.jsonl");
  auto ratings = simulate_study(pairs, world.index, simulated_panel(config.panel_config()));
  Rng rng(1);
  shuffle(ratings, rng);
  write_ratings(live_run / "rounds" / "1" / "live_ratings.jsonl", ratings);

  CHECK(cli("label -t 1 " + args(live_conf, live_run)) == 0);
  CHECK(read_text(live_run / "rounds" / "1" / "labels.jsonl") ==
        read_text(oracle_run / "rounds" / "1" / "labels.jsonl"));
}
