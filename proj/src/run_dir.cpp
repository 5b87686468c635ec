#include "selfgmad/run_dir.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "selfgmad/error.hpp"

namespace selfgmad {

using nlohmann::json;

std::filesystem::path RunDir::samples(std::string_view set) const {
  return root_ / "data" / ("samples_" + std::string(set) + ".jsonl");
}

std::filesystem::path RunDir::labels(std::string_view set) const {
  return root_ / "data" / ("labels_" + std::string(set) + ".jsonl");
}

std::filesystem::path RunDir::model(int t, std::string_view id) const { return models(t) / (std::string(id) + ".json"); }

int RunDir::completed_rounds() const {
  int t = 0;
  while (std::filesystem::is_regular_file(metrics(t + 1))) ++t;
  return t;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void bind_config(const RunDir& run, const RunConfig& config) {
  config.validate();
  const auto path = run.manifest();
  if (!std::filesystem::exists(path)) {
    json manifest = {{"format", "selfgmad-run"},
                     {"version", 1},
                     {"config_hash", config.hash()},
                     {"seed", config.seed},
                     {"config", config.canonical()}};
    write_text_atomic(path, manifest.dump(2) + "\n");
    return;
  }
  json manifest;
  try {
    manifest = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const auto recorded = manifest.value("config_hash", std::string());
  if (recorded != config.hash()) {
    throw ConfigError("config drift: " + path.string() + " records hash " + recorded + " but the current config hashes to " +
                      config.hash());
  }
}

}  // namespace selfgmad
