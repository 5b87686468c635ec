#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "selfgmad/datapool.hpp"

namespace selfgmad {

/// Fully connected layer. `scale` holds one multiplicative factor per
/// incoming activation, so the factors of layer l+1 are the per-unit scales
/// of layer l's hidden units (the slimming hook). Masks are 0/1 and applied
/// on every forward pass.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
  std::vector<double> scale;   // in
  std::vector<std::uint8_t> weight_mask;  // out x in
  std::vector<std::uint8_t> unit_mask;    // out

  double w(std::size_t unit, std::size_t input) const { return weight[unit * in + input]; }
  bool live(std::size_t unit, std::size_t input) const { return weight_mask[unit * in + input] != 0; }
};

/// Monotone four-parameter logistic from raw output to MOS. Its range is
/// constrained to (lo, hi) inside [0,100] and the slope is always positive.
struct ScaleMap {
  bool fitted = false;
  double lo = 0.0;
  double hi = 100.0;
  double center = 50.0;
  double width = 1.0;

  /// Identity when not fitted.
  double apply(double raw) const;
  bool operator==(const ScaleMap&) const = default;
};

struct Lineage {
  std::string parent;
  std::string criterion;
  double ratio = 0.0;
  int round = 0;
  bool operator==(const Lineage&) const = default;
};

/// Feed-forward regressor: tanh hidden layers, linear scalar head.
/// raw = out_shift + out_gain * z_out, so small weights reach the MOS range.
struct Model {
  std::string id;
  std::vector<Layer> layers;
  double out_shift = 50.0;
  double out_gain = 50.0;
  ScaleMap scale_map;
  Lineage lineage;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::vector<std::size_t> widths() const;
  /// Weights + biases + scales.
  std::size_t parameter_count() const;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  int max_epochs = 60;
  double l1_scale_penalty = 0.0;  // l1 on hidden-unit scales, slimming warm-up only
  std::uint64_t seed = 1;

  void validate() const;
};

/// Scales are kept at or above this floor so unmasked units stay positive.
inline constexpr double kMinScale = 1e-4;

struct Example {
  std::span<const double> x;
  double y = 0.0;
};

/// Resolves every labeled id in `pool`; throws DataError on an unknown id.
std::vector<Example> resolve_examples(const LabeledSet& labels, const SampleIndex& pool);

Model init_model(std::span<const std::size_t> widths, std::uint64_t seed, std::string id = "f");

/// Raw (un-mapped) output.
double forward(const Model& model, std::span<const double> features);
/// clamp(scale_map(forward), 0, 100): the score used everywhere downstream.
double predict_mos(const Model& model, std::span<const double> features);
std::vector<double> predict_mos(const Model& model, std::span<const Sample> samples);

/// Parameter vector layout: per layer, weight then bias then scale.
std::vector<double> flatten_parameters(const Model& model);
void assign_parameters(Model& model, std::span<const double> parameters);

/// d raw / d parameters for one input, masked entries exactly zero.
std::vector<double> output_gradient(const Model& model, std::span<const double> features);

/// Gradient of mean squared error (raw vs target) over the batch, plus the
/// optional l1 penalty on hidden-unit scales. Writes the mean loss.
std::vector<double> loss_gradient(const Model& model, std::span<const Example* const> batch,
                                  double l1_scale_penalty, double* mean_loss = nullptr);

double mean_squared_error(const Model& model, std::span<const Example> data);

/// Re-applies masks (masked weights to exactly zero) and the scale floor.
void enforce_constraints(Model& model);

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t parameter_count, AdamConfig config);
  void step(Model& model, std::span<const double> gradient);

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long steps_ = 0;
};

struct TrainResult {
  Model model;
  /// Full-data MSE before training followed by one value per epoch.
  std::vector<double> loss_trace;
};

/// Minibatch Adam on MSE. Throws std::runtime_error on a non-finite loss.
TrainResult train(Model model, std::span<const Example> data, const TrainConfig& config);
TrainResult train(Model model, const LabeledSet& labels, const SampleIndex& pool, const TrainConfig& config);

/// Least-squares logistic fit from raw outputs to calibration MOS.
/// Requires >= 10 points and a non-constant raw output.
ScaleMap fit_scale_map(const Model& model, std::span<const Example> calibration);
ScaleMap fit_scale_map(std::span<const double> raw, std::span<const double> mos);

// model.json: versioned; doubles round-trip exactly.
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

}  // namespace selfgmad
