#include "selfgmad/datapool.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "selfgmad/error.hpp"
#include "selfgmad/score_matrix.hpp"

namespace selfgmad {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumAttributes> kAttributeNames = {
    "noise", "blur", "exposure", "contrast", "colorfulness", "sharpness"};

// Per-attribute weight of the multiplicative degradation terms.
constexpr std::array<double, kNumAttributes> kOracleWeights = {0.60, 0.55, 0.45, 0.40, 0.30, 0.40};
constexpr double kOracleExponent = 3.0;
// Noise x blur interaction, active only once both exceed the onset.
constexpr double kNoiseBlurOnset = 0.5;
constexpr double kNoiseBlurWeight = 0.8;

bool finite_all(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string sample_id(std::string_view prefix, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return std::string(prefix) + "-" + digits;
}

Latents uniform_latents(Rng& rng, const std::array<std::pair<double, double>, kNumAttributes>& box) {
  Latents latents;
  for (std::size_t a = 0; a < kNumAttributes; ++a) latents.values[a] = rng.uniform(box[a].first, box[a].second);
  return latents;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::string format_double(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buffer, end);
}

std::string role_to_tag(LabelRole role, int round) {
  switch (role) {
    case LabelRole::TrainD: return "train-D";
    case LabelRole::Probe: return "probe";
    case LabelRole::Gmad: return "gmad-L(" + std::to_string(round) + ")";
  }
  return "unknown";
}

std::pair<LabelRole, int> tag_to_role(const std::string& tag) {
  if (tag == "train-D") return {LabelRole::TrainD, 0};
  if (tag == "probe") return {LabelRole::Probe, 0};
  if (tag.rfind("gmad-L(", 0) == 0 && tag.back() == ')') {
    return {LabelRole::Gmad, std::stoi(tag.substr(7, tag.size() - 8))};
  }
  throw DataError("unknown label role '" + tag + "'");
}

}  // namespace

std::string_view attribute_name(Attribute attribute) {
  return kAttributeNames[static_cast<std::size_t>(attribute)];
}

std::optional<Attribute> parse_attribute(std::string_view name) {
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    if (kAttributeNames[a] == name) return static_cast<Attribute>(a);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// BiasSpec

bool BiasSpec::contains(const Latents& latents) const {
  if (region.empty()) return false;
  return std::all_of(region.begin(), region.end(), [&](const RegionBound& bound) {
    const double v = latents[bound.attribute];
    return bound.above ? v > bound.threshold : v < bound.threshold;
  });
}

std::array<std::pair<double, double>, kNumAttributes> BiasSpec::box() const {
  std::array<std::pair<double, double>, kNumAttributes> bounds;
  bounds.fill({0.0, 1.0});
  for (const auto& bound : region) {
    auto& [lo, hi] = bounds[static_cast<std::size_t>(bound.attribute)];
    if (bound.above) {
      lo = std::max(lo, bound.threshold);
    } else {
      hi = std::min(hi, bound.threshold);
    }
  }
  return bounds;
}

double BiasSpec::region_mass() const {
  if (region.empty()) return 0.0;
  double mass = 1.0;
  for (const auto& [lo, hi] : box()) mass *= std::max(0.0, hi - lo);
  return mass;
}

BiasSpec BiasSpec::parse(std::string_view text) {
  BiasSpec spec;
  if (text.empty() || text == "uniform") return spec;
  const auto at = text.find('@');
  if (at == std::string_view::npos) throw std::invalid_argument("bias spec needs '@factor': " + std::string(text));
  const std::string factor_text(text.substr(at + 1));
  spec.factor = std::stod(factor_text);
  std::string_view terms = text.substr(0, at);
  while (!terms.empty()) {
    const auto amp = terms.find('&');
    const std::string_view term = terms.substr(0, amp);
    const auto op = term.find_first_of("<>");
    if (op == std::string_view::npos) throw std::invalid_argument("bias term needs '<' or '>': " + std::string(term));
    auto attribute = parse_attribute(term.substr(0, op));
    if (!attribute) throw std::invalid_argument("unknown attribute in bias term: " + std::string(term));
    spec.region.push_back({*attribute, term[op] == '>', std::stod(std::string(term.substr(op + 1)))});
    terms = amp == std::string_view::npos ? std::string_view{} : terms.substr(amp + 1);
  }
  return spec;
}

std::string BiasSpec::to_string() const {
  if (region.empty()) return "uniform";
  std::string out;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (i) out += '&';
    out += attribute_name(region[i].attribute);
    out += region[i].above ? '>' : '<';
    out += format_double(region[i].threshold);
  }
  return out + "@" + format_double(factor);
}

// ---------------------------------------------------------------------------
// FeatureEmbedding

FeatureEmbedding::FeatureEmbedding(std::size_t dim, std::uint64_t world_seed) : dim_(dim) {
  if (dim < kNumAttributes) throw std::invalid_argument("feature dimension must be at least the number of latent attributes");
  const std::size_t nuisance = std::min(dim / 4, dim - kNumAttributes);
  informative_ = dim - nuisance;

  Rng rng(mix_seed(world_seed, 0xe3bedULL));
  // Orthonormal columns by Gram-Schmidt over a Gaussian informative_ x 6 matrix.
  projection_.assign(informative_ * kNumAttributes, 0.0);
  for (std::size_t c = 0; c < kNumAttributes; ++c) {
    std::vector<double> column(informative_);
    for (auto& v : column) v = rng.normal();
    for (std::size_t prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (std::size_t r = 0; r < informative_; ++r) dot += column[r] * projection_[r * kNumAttributes + prev];
      for (std::size_t r = 0; r < informative_; ++r) column[r] -= dot * projection_[r * kNumAttributes + prev];
    }
    double norm = 0.0;
    for (double v : column) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < informative_; ++r) projection_[r * kNumAttributes + c] = column[r] / norm;
  }
  // Keep pre-activations O(1) regardless of how many coordinates share the signal.
  const double base_gain = std::sqrt(static_cast<double>(informative_) / kNumAttributes);
  gain_.resize(informative_);
  offset_.resize(informative_);
  for (std::size_t r = 0; r < informative_; ++r) {
    gain_[r] = base_gain * rng.uniform(0.8, 1.4);
    offset_[r] = rng.uniform(-0.4, 0.4);
  }
}

std::vector<double> FeatureEmbedding::embed(const Latents& latents, Rng& nuisance_rng) const {
  std::vector<double> features(dim_);
  for (std::size_t r = 0; r < informative_; ++r) {
    double u = 0.0;
    for (std::size_t a = 0; a < kNumAttributes; ++a) {
      u += projection_[r * kNumAttributes + a] * (2.0 * latents.values[a] - 1.0);
    }
    features[r] = std::tanh(gain_[r] * u + offset_[r]);
  }
  for (std::size_t r = informative_; r < dim_; ++r) features[r] = nuisance_rng.normal();
  return features;
}

// ---------------------------------------------------------------------------
// Generation

std::vector<Sample> synth_pool(std::size_t count, std::size_t dim, std::uint64_t seed, const BiasSpec& bias,
                               const SynthOptions& options) {
  if (count == 0) throw std::invalid_argument("pool count must be positive");
  if (dim == 0) throw std::invalid_argument("feature dimension must be positive");
  const FeatureEmbedding embedding(dim, options.world_seed);

  Rng rng(mix_seed(seed, 0x9001ULL));
  std::vector<Latents> latents(count);
  if (bias.is_uniform()) {
    // Latin hypercube: each attribute hits every 1/count stratum exactly once.
    for (std::size_t a = 0; a < kNumAttributes; ++a) {
      std::vector<std::size_t> strata(count);
      for (std::size_t i = 0; i < count; ++i) strata[i] = i;
      shuffle(strata, rng);
      for (std::size_t i = 0; i < count; ++i) {
        latents[i].values[a] = (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(count);
      }
    }
  } else {
    const double mass = bias.region_mass();
    if (!(mass > 0.0)) throw std::invalid_argument("bias region has zero mass: " + bias.to_string());
    if (bias.factor < 0.0) throw std::invalid_argument("bias factor must be non-negative");
    const double denominator = 1.0 - mass + mass * bias.factor;
    if (!(denominator > 0.0)) throw std::invalid_argument("bias leaves no admissible latents: " + bias.to_string());
    const double share = mass * bias.factor / denominator;
    const auto inside = static_cast<std::size_t>(std::llround(share * static_cast<double>(count)));
    const auto region_box = bias.box();
    std::array<std::pair<double, double>, kNumAttributes> cube;
    cube.fill({0.0, 1.0});
    for (std::size_t i = 0; i < count; ++i) {
      if (i < inside) {
        latents[i] = uniform_latents(rng, region_box);
      } else {
        do {
          latents[i] = uniform_latents(rng, cube);
        } while (bias.contains(latents[i]));
      }
    }
    shuffle(latents, rng);
  }

  std::vector<Sample> pool(count);
  Rng nuisance(mix_seed(seed, 0x7a15eULL));
  for (std::size_t i = 0; i < count; ++i) {
    pool[i].id = sample_id(options.id_prefix, i);
    pool[i].features = embedding.embed(latents[i], nuisance);
    pool[i].latents = latents[i];
  }
  return pool;
}

double oracle_quality(const Latents& latents) {
  double quality = 100.0;
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    quality *= 1.0 - kOracleWeights[a] * std::pow(latents.values[a], kOracleExponent);
  }
  const double span = 1.0 - kNoiseBlurOnset;
  const double joint = std::max(0.0, latents[Attribute::Noise] - kNoiseBlurOnset) / span *
                       std::max(0.0, latents[Attribute::Blur] - kNoiseBlurOnset) / span;
  quality *= 1.0 - kNoiseBlurWeight * std::sqrt(joint);
  return std::clamp(quality, 0.0, 100.0);
}

double oracle_quality(const Sample& sample) {
  if (!sample.latents) throw DataError("sample " + sample.id + " has no latents; oracle quality unavailable");
  return oracle_quality(*sample.latents);
}

// ---------------------------------------------------------------------------
// Labels and lookup

std::string LabeledSet::role_tag() const { return role_to_tag(role, round); }

LabeledSet oracle_labels(std::span<const Sample> samples, LabelRole role, int round) {
  LabeledSet labels;
  labels.role = role;
  labels.round = round;
  for (const auto& sample : samples) labels.entries[sample.id] = {oracle_quality(sample), 0.0, 1};
  return labels;
}

void SampleIndex::add(std::span<const Sample> pool) {
  for (const auto& sample : pool) {
    if (!by_id_.emplace(sample.id, &sample).second) throw DataError("duplicate sample id " + sample.id);
  }
}

const Sample* SampleIndex::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : it->second;
}

const Sample& SampleIndex::at(std::string_view id) const {
  const Sample* sample = find(id);
  if (!sample) throw DataError("unknown sample id " + std::string(id));
  return *sample;
}

// ---------------------------------------------------------------------------
// File formats

void write_samples(const std::filesystem::path& path, std::span<const Sample> samples) {
  auto out = open_for_write(path);
  for (const auto& sample : samples) {
    json record;
    record["id"] = sample.id;
    record["features"] = sample.features;
    if (sample.latents) {
      json latents = json::object();
      for (std::size_t a = 0; a < kNumAttributes; ++a) latents[std::string(kAttributeNames[a])] = sample.latents->values[a];
      record["latents"] = latents;
    } else {
      record["latents"] = nullptr;
    }
    record["image_ref"] = sample.image_ref ? json(*sample.image_ref) : json(nullptr);
    out << record.dump() << '\n';
  }
}

std::vector<Sample> load_manifest(const std::filesystem::path& path, const ScoreMatrix* scores) {
  auto in = open_for_read(path);
  std::vector<Sample> samples;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> DataError {
    return DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("parse error: ") + e.what());
    }
    Sample sample;
    try {
      sample.id = record.at("id").get<std::string>();
      if (record.contains("features") && !record["features"].is_null()) {
        sample.features = record["features"].get<std::vector<double>>();
      }
      if (record.contains("latents") && !record["latents"].is_null()) {
        Latents latents;
        for (std::size_t a = 0; a < kNumAttributes; ++a) {
          latents.values[a] = record["latents"].at(std::string(kAttributeNames[a])).get<double>();
        }
        sample.latents = latents;
      }
      if (record.contains("image_ref") && !record["image_ref"].is_null()) {
        sample.image_ref = record["image_ref"].get<std::string>();
      }
    } catch (const json::exception& e) {
      throw fail(std::string("bad record: ") + e.what());
    }
    if (!seen.emplace(sample.id, line_no).second) throw fail("duplicate id " + sample.id);
    if (!finite_all(sample.features)) throw fail("non-finite feature in " + sample.id);
    if (sample.latents) {
      for (double v : sample.latents->values) {
        if (!(v >= 0.0 && v <= 1.0)) throw fail("latent outside [0,1] in " + sample.id);
      }
    }
    if (sample.features.empty()) {
      if (!sample.image_ref) throw fail("sample " + sample.id + " has neither features nor image_ref");
      if (!scores || !scores->sample_index(sample.id)) {
        throw fail("sample " + sample.id + " has no features and no matching score row");
      }
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

void write_scores(const std::filesystem::path& path, const ScoreMatrix& scores) {
  auto out = open_for_write(path);
  out << "sample_id";
  for (const auto& id : scores.model_ids()) out << ',' << id;
  out << '\n';
  for (std::size_t s = 0; s < scores.samples(); ++s) {
    out << scores.sample_ids()[s];
    for (std::size_t m = 0; m < scores.models(); ++m) out << ',' << format_double(scores.at(m, s));
    out << '\n';
  }
}

ScoreMatrix load_scores(const std::filesystem::path& path, const SampleIndex* known) {
  auto in = open_for_read(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty score file");
  auto split = [](const std::string& text) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(text);
    while (std::getline(stream, cell, ',')) cells.push_back(cell);
    if (!text.empty() && text.back() == ',') cells.emplace_back();
    return cells;
  };
  const auto header = split(line);
  if (header.empty() || header[0] != "sample_id") throw DataError(path.string() + ":1: header must start with sample_id");
  std::vector<std::string> model_ids(header.begin() + 1, header.end());

  std::vector<std::string> sample_ids;
  std::vector<std::vector<double>> rows;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    const std::string where = path.string() + ": row " + std::to_string(line_no);
    if (cells.empty() || cells[0].empty()) throw DataError(where + ", column sample_id: missing id");
    if (!seen.emplace(cells[0], line_no).second) throw DataError(where + ": duplicate sample id " + cells[0]);
    if (known && !known->find(cells[0])) throw DataError(where + ": unknown sample id " + cells[0]);
    std::vector<double> values(model_ids.size());
    for (std::size_t m = 0; m < model_ids.size(); ++m) {
      const std::string column = "column " + std::to_string(m + 2) + " (" + model_ids[m] + ")";
      if (m + 1 >= cells.size() || cells[m + 1].empty()) throw DataError(where + ", " + column + ": missing score");
      const std::string& cell = cells[m + 1];
      auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), values[m]);
      if (ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(values[m])) {
        throw DataError(where + ", " + column + ": bad score '" + cell + "'");
      }
    }
    if (cells.size() > model_ids.size() + 1) throw DataError(where + ": more cells than header columns");
    sample_ids.push_back(cells[0]);
    rows.push_back(std::move(values));
  }
  ScoreMatrix scores(model_ids, sample_ids);
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t m = 0; m < model_ids.size(); ++m) scores.at(m, s) = rows[s][m];
  }
  return scores;
}

void write_labels(const std::filesystem::path& path, const LabeledSet& labels) {
  auto out = open_for_write(path);
  const std::string tag = labels.role_tag();
  for (const auto& [id, entry] : labels.entries) {
    json record = {{"sample_id", id}, {"mos", entry.mos}, {"std", entry.std}, {"n", entry.n_ratings}, {"role", tag}};
    out << record.dump() << '\n';
  }
}

LabeledSet load_labels(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  LabeledSet labels;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json record = json::parse(line);
      const auto [role, round] = tag_to_role(record.at("role").get<std::string>());
      if (first) {
        labels.role = role;
        labels.round = round;
        first = false;
      }
      LabelEntry entry{record.at("mos").get<double>(), record.at("std").get<double>(), record.at("n").get<int>()};
      if (!(entry.mos >= 0.0 && entry.mos <= 100.0)) throw DataError("mos outside [0,100]");
      const auto id = record.at("sample_id").get<std::string>();
      if (!labels.entries.emplace(id, entry).second) throw DataError("duplicate sample id " + id);
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return labels;
}

}  // namespace selfgmad
