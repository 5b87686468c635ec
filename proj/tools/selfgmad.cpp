// Command-line front end. Every command works on one run directory.

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "selfgmad/annotation_server.hpp"
#include "selfgmad/config.hpp"
#include "selfgmad/error.hpp"
#include "selfgmad/loop.hpp"
#include "selfgmad/run_dir.hpp"

namespace {

using namespace selfgmad;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitIncomplete = 4;

std::atomic<bool> g_interrupted{false};

struct Common {
  std::string config_path;
  std::string run_dir = "run";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_path, "key = value config file");
  cmd->add_option("-r,--run-dir", common.run_dir, "run directory")->capture_default_str();
  cmd->add_option("--seed", common.seed, "overrides the config seed");
  cmd->add_option("--set", common.overrides, "extra key=value overrides");
  cmd->add_option("--workers", common.workers, "worker threads (0 = all cores)");
}

RunConfig resolve_config(const Common& common) {
  RunConfig config = common.config_path.empty() ? RunConfig{} : load_config(common.config_path);
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    set_config_value(config, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (common.seed) config.seed = *common.seed;
  if (common.workers) config.workers = *common.workers;
  config.validate();
  return config;
}

int serve_study(const RunDir& run, const RunConfig& config, int t, const std::string& host, int port) {
  const World world = load_world(run);
  const auto pairs = load_pairs(run.pairs(t));
  std::vector<AnnotationStudy::Item> items;
  for (const auto& [sample, pair] : study_items(pairs)) items.push_back({sample, pair});
  AnnotationStudy study(std::move(items), config.subjects, config.derived_seed("study-" + std::to_string(t)),
                        run.live_ratings(t));
  AnnotationServer server(study, world.index);
  const int bound = server.bind(host, port);
  if (bound < 0) {
    std::cerr << "serve: cannot bind " << host << ":" << port << "\n";
    return kExitFailure;
  }
  std::cout << "serving round " << t << " study (" << study.items() << " images, " << config.subjects
            << " subjects) on http://" << host << ":" << bound << std::endl;
  std::thread worker([&] { server.serve(); });
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  while (!g_interrupted && !study.closed()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.stop();
  worker.join();
  std::cout << (study.complete() ? "study complete" : "study stopped before completion") << std::endl;
  return study.complete() ? kExitOk : kExitIncomplete;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Troubleshoot a blind quality model with pruned self-competitors and gMAD pairs"};
  app.require_subcommand(1);
  Common common;
  int round = 1;
  int rounds = -1;
  std::string host = "127.0.0.1";
  int port = 8080;

  struct Command {
    CLI::App* app;
    std::function<int(const RunDir&, const RunConfig&)> run;
  };
  std::vector<Command> commands;
  auto add = [&](const char* name, const char* help, std::function<int(const RunDir&, const RunConfig&)> fn) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    commands.push_back({cmd, std::move(fn)});
    return cmd;
  };
  auto with_round = [&](CLI::App* cmd) { cmd->add_option("-t,--round", round, "round index (>= 1)")->required(); };

  add("synth", "generate S, D and the probe set", [&](const RunDir& run, const RunConfig& cfg) {
    step_synth(run, cfg);
    return kExitOk;
  });
  add("train", "train the target model f0 on D", [&](const RunDir& run, const RunConfig& cfg) {
    step_train(run, cfg, std::cout);
    return kExitOk;
  });
  add("prune", "build the pruned pool from f0", [&](const RunDir& run, const RunConfig& cfg) {
    step_prune(run, cfg, std::cout);
    return kExitOk;
  });
  with_round(add("ensembles", "sample the random ensembles of a round", [&](const RunDir& run, const RunConfig& cfg) {
    step_ensembles(run, cfg, round);
    return kExitOk;
  }));
  with_round(add("score", "score the unlabeled pool with f and the pruned pool", [&](const RunDir& run, const RunConfig& cfg) {
    step_score(run, cfg, round);
    return kExitOk;
  }));
  with_round(add("gmad", "select the gMAD set of a round", [&](const RunDir& run, const RunConfig& cfg) {
    step_gmad(run, cfg, round, std::cout);
    return kExitOk;
  }));
  with_round(add("label", "collect labels (oracle panel or finished live study)",
                 [&](const RunDir& run, const RunConfig& cfg) {
                   step_label(run, cfg, round, std::cout);
                   return kExitOk;
                 }));
  auto* serve = add("serve", "run the live annotation service for a round", [&](const RunDir& run, const RunConfig& cfg) {
    return serve_study(run, cfg, round, host, port);
  });
  with_round(serve);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  with_round(add("rectify", "fine-tune f and the pool on D and L", [&](const RunDir& run, const RunConfig& cfg) {
    step_rectify(run, cfg, round, std::cout);
    return kExitOk;
  }));
  add("round", "run every step of the troubleshooting loop", [&](const RunDir& run, const RunConfig& cfg) {
    run_rounds(run, cfg, rounds >= 0 ? rounds : cfg.rounds, std::cout);
    return kExitOk;
  })->add_option("-n,--rounds", rounds, "number of rounds (default: config)");
  add("tournament", "gMAD tournament among f0..fr", [&](const RunDir& run, const RunConfig& cfg) {
    step_tournament(run, cfg, std::cout);
    return kExitOk;
  });
  add("ablation", "failure-spotting comparison of sample selectors", [&](const RunDir& run, const RunConfig& cfg) {
    step_ablation(run, cfg, std::cout);
    return kExitOk;
  });
  add("report", "write report.md", [&](const RunDir& run, const RunConfig&) {
    step_report(run);
    std::cout << read_text(run.report());
    return kExitOk;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const RunConfig config = resolve_config(common);
    const RunDir run(common.run_dir);
    bind_config(run, config);
    for (const auto& c : commands) {
      if (c.app->parsed()) return c.run(run, config);
    }
    return kExitFailure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IncompleteStudy& e) {
    std::cerr << "incomplete study: " << e.what() << "\n";
    return kExitIncomplete;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
