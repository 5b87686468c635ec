#include "selfgmad/ensemble.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "selfgmad/error.hpp"
#include "selfgmad/parallel.hpp"
#include "selfgmad/rng.hpp"

namespace selfgmad {

using nlohmann::json;

namespace {

std::string ensemble_id(std::size_t index) {
  std::string digits = std::to_string(index + 1);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "g" + digits;
}

void validate_members(const EnsembleSpec& spec, std::size_t m) {
  if (spec.members.empty()) throw std::invalid_argument("ensemble " + spec.id + " has no members");
  for (std::size_t k = 0; k < spec.members.size(); ++k) {
    if (spec.members[k] >= m) throw std::invalid_argument("ensemble " + spec.id + " references a member outside the pool");
    if (k > 0 && spec.members[k] <= spec.members[k - 1]) {
      throw std::invalid_argument("ensemble " + spec.id + " members must be strictly ascending");
    }
  }
}

}  // namespace

std::vector<std::uint8_t> EnsembleSpec::membership(std::size_t m) const {
  std::vector<std::uint8_t> row(m, 0);
  for (auto j : members) row.at(j) = 1;
  return row;
}

std::uint64_t binomial(std::size_t m, std::size_t s) {
  if (s > m) return 0;
  s = std::min(s, m - s);
  unsigned __int128 value = 1;
  for (std::size_t k = 1; k <= s; ++k) {
    value = value * (m - s + k) / k;
    if (value > UINT64_MAX) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(value);
}

std::vector<EnsembleSpec> sample_ensembles(std::size_t m, std::size_t s, std::size_t n, std::uint64_t seed) {
  if (s < 1 || s > m) throw std::invalid_argument("ensemble size s must satisfy 1 <= s <= m");
  const std::uint64_t available = binomial(m, s);
  if (n > available) {
    throw std::invalid_argument("cannot draw " + std::to_string(n) + " distinct ensembles: C(" + std::to_string(m) +
                                "," + std::to_string(s) + ") = " + std::to_string(available));
  }
  Rng rng(mix_seed(seed, 0xe45eULL));
  std::vector<std::vector<std::size_t>> subsets;
  if (available <= 200000 && 2 * n > available) {
    // Dense request: enumerate every subset and take a random n of them.
    std::vector<std::size_t> current(s);
    std::iota(current.begin(), current.end(), 0);
    while (true) {
      subsets.push_back(current);
      std::size_t k = s;
      while (k > 0 && current[k - 1] == m - s + k - 1) --k;
      if (k == 0) break;
      ++current[k - 1];
      for (std::size_t r = k; r < s; ++r) current[r] = current[r - 1] + 1;
    }
    shuffle(subsets, rng);
    subsets.resize(n);
  } else {
    std::set<std::vector<std::size_t>> seen;
    std::vector<std::size_t> indices(m);
    while (subsets.size() < n) {
      std::iota(indices.begin(), indices.end(), 0);
      for (std::size_t k = 0; k < s; ++k) std::swap(indices[k], indices[k + rng.index(m - k)]);
      std::vector<std::size_t> subset(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(s));
      std::sort(subset.begin(), subset.end());
      if (seen.insert(subset).second) subsets.push_back(std::move(subset));
    }
  }
  std::vector<EnsembleSpec> specs(n);
  for (std::size_t i = 0; i < n; ++i) specs[i] = {ensemble_id(i), std::move(subsets[i])};
  return specs;
}

double ensemble_predict(const EnsembleSpec& spec, const ScoreMatrix& pool_scores, std::size_t sample) {
  validate_members(spec, pool_scores.models());
  double total = 0.0;
  for (auto j : spec.members) total += pool_scores.at(j, sample);
  return total / static_cast<double>(spec.members.size());
}

ScoreMatrix ensemble_scores(std::span<const EnsembleSpec> specs, const ScoreMatrix& pool_scores) {
  std::vector<std::string> ids;
  for (const auto& spec : specs) {
    validate_members(spec, pool_scores.models());
    ids.push_back(spec.id);
  }
  ScoreMatrix out(ids, pool_scores.sample_ids());
  parallel_for(specs.size(), [&](std::size_t i) {
    auto row = out.row(i);
    for (auto j : specs[i].members) {
      const auto member = pool_scores.row(j);
      for (std::size_t x = 0; x < row.size(); ++x) row[x] += member[x];
    }
    const double s = static_cast<double>(specs[i].members.size());
    for (auto& v : row) v /= s;
  });
  return out;
}

void write_ensembles(const std::filesystem::path& path, std::span<const EnsembleSpec> specs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& spec : specs) out << json{{"id", spec.id}, {"members", spec.members}}.dump() << '\n';
}

std::vector<EnsembleSpec> load_ensembles(const std::filesystem::path& path, std::size_t pool_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<EnsembleSpec> specs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json record = json::parse(line);
      EnsembleSpec spec{record.at("id").get<std::string>(), record.at("members").get<std::vector<std::size_t>>()};
      validate_members(spec, pool_size);
      specs.push_back(std::move(spec));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return specs;
}

}  // namespace selfgmad
