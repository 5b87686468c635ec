#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selfgmad/rng.hpp"

namespace selfgmad {

class ScoreMatrix;

inline constexpr std::size_t kNumAttributes = 6;
inline constexpr std::uint64_t kDefaultWorldSeed = 0x5e1f6a3dULL;

/// Latent distortion axes. Every axis is a degradation amount in [0,1]:
/// 0 is pristine, 1 is the strongest distortion.
enum class Attribute : std::size_t { Noise, Blur, Exposure, Contrast, Colorfulness, Sharpness };

std::string_view attribute_name(Attribute attribute);
std::optional<Attribute> parse_attribute(std::string_view name);

struct Latents {
  std::array<double, kNumAttributes> values{};

  double operator[](Attribute a) const { return values[static_cast<std::size_t>(a)]; }
  double& operator[](Attribute a) { return values[static_cast<std::size_t>(a)]; }
  bool operator==(const Latents&) const = default;
};

/// One unit of a pool. Latents are hidden from models; only the oracle,
/// the simulated raters and the stimulus renderer read them.
struct Sample {
  std::string id;
  std::vector<double> features;
  std::optional<Latents> latents;
  std::optional<std::string> image_ref;

  bool operator==(const Sample&) const = default;
};

/// One half-space bound on a latent attribute; a region is their conjunction.
struct RegionBound {
  Attribute attribute = Attribute::Noise;
  bool above = true;  // attribute > threshold when true, attribute < threshold otherwise
  double threshold = 0.5;
};

/// Coverage of the generated pool. An empty region means uniform coverage.
/// Otherwise the region's share of the pool is scaled by `factor` relative
/// to its unbiased share.
struct BiasSpec {
  std::vector<RegionBound> region;
  double factor = 1.0;

  bool is_uniform() const { return region.empty(); }
  bool contains(const Latents& latents) const;
  /// Lebesgue measure of the region inside the unit hypercube.
  double region_mass() const;
  /// Lower/upper bound per attribute after intersecting all constraints.
  std::array<std::pair<double, double>, kNumAttributes> box() const;

  /// Parses "noise>0.6&blur>0.6@0.05"; "uniform" or "" gives the uniform spec.
  static BiasSpec parse(std::string_view text);
  std::string to_string() const;
};

/// Fixed latent-to-feature map: random orthonormal projection of the centered
/// latents, a per-coordinate tanh, and a block of pure-noise nuisance
/// coordinates. Frozen by the world seed so every pool shares it.
class FeatureEmbedding {
 public:
  FeatureEmbedding(std::size_t dim, std::uint64_t world_seed);

  std::size_t dim() const { return dim_; }
  std::size_t informative_dims() const { return informative_; }
  std::size_t nuisance_dims() const { return dim_ - informative_; }

  std::vector<double> embed(const Latents& latents, Rng& nuisance_rng) const;

 private:
  std::size_t dim_;
  std::size_t informative_;
  std::vector<double> projection_;  // informative_ x kNumAttributes, row-major
  std::vector<double> gain_;
  std::vector<double> offset_;
};

struct SynthOptions {
  std::string id_prefix = "S";
  std::uint64_t world_seed = kDefaultWorldSeed;
};

/// Generates `count` samples with latents. Uniform coverage uses a latin
/// hypercube per attribute; a bias spec allocates the region's exact expected
/// share and fills both parts uniformly. Pure in all arguments.
std::vector<Sample> synth_pool(std::size_t count, std::size_t dim, std::uint64_t seed,
                               const BiasSpec& bias, const SynthOptions& options = {});

/// Ground-truth perceptual quality on [0,100]. 100 for pristine latents.
double oracle_quality(const Latents& latents);
/// Throws DataError when the sample carries no latents.
double oracle_quality(const Sample& sample);

struct LabelEntry {
  double mos = 0.0;
  double std = 0.0;
  int n_ratings = 1;

  bool operator==(const LabelEntry&) const = default;
};

enum class LabelRole { TrainD, Gmad, Probe };

struct LabeledSet {
  LabelRole role = LabelRole::TrainD;
  int round = 0;  // t for gmad-L(t)
  std::map<std::string, LabelEntry> entries;

  std::string role_tag() const;
  std::size_t size() const { return entries.size(); }
  bool contains(const std::string& id) const { return entries.count(id) != 0; }
};

/// Labels every sample with its exact oracle quality (std 0, one rating).
LabeledSet oracle_labels(std::span<const Sample> samples, LabelRole role, int round = 0);

/// Id lookup over one or more pools. Pools must outlive the index.
class SampleIndex {
 public:
  SampleIndex() = default;
  explicit SampleIndex(std::span<const Sample> pool) { add(pool); }

  /// Throws DataError on an id already present.
  void add(std::span<const Sample> pool);
  const Sample* find(std::string_view id) const;
  /// Throws DataError when absent.
  const Sample& at(std::string_view id) const;
  std::size_t size() const { return by_id_.size(); }

 private:
  std::unordered_map<std::string, const Sample*> by_id_;
};

// samples.jsonl: {"id","features":[...],"latents":{...}|null,"image_ref":string|null}
void write_samples(const std::filesystem::path& path, std::span<const Sample> samples);
/// Parses samples.jsonl. Records without features are accepted only when
/// `scores` is supplied and has a column for them.
std::vector<Sample> load_manifest(const std::filesystem::path& path, const ScoreMatrix* scores = nullptr);

// scores.csv: header "sample_id,<model_id>,...", one row per sample
void write_scores(const std::filesystem::path& path, const ScoreMatrix& scores);
/// When `known` is given, rows referencing ids outside it are rejected.
ScoreMatrix load_scores(const std::filesystem::path& path, const SampleIndex* known = nullptr);

// labels.jsonl: {"sample_id","mos","std","n","role"}
void write_labels(const std::filesystem::path& path, const LabeledSet& labels);
LabeledSet load_labels(const std::filesystem::path& path);

}  // namespace selfgmad
