#include "selfgmad/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "selfgmad/error.hpp"

namespace selfgmad {

using nlohmann::json;

namespace {

constexpr int kModelFormatVersion = 1;

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Cached activations: inputs[l] feeds layer l, pre[l] is layer l's pre-activation.
struct Trace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre;
};

double run_forward(const Model& model, std::span<const double> x, Trace* trace) {
  if (x.size() != model.input_dim()) {
    throw std::invalid_argument("feature dimension " + std::to_string(x.size()) + " does not match model input " +
                                std::to_string(model.input_dim()));
  }
  std::vector<double> activation(x.begin(), x.end());
  std::vector<double> next;
  const std::size_t last = model.layers.size() - 1;
  if (trace) {
    trace->inputs.resize(model.layers.size());
    trace->pre.resize(model.layers.size());
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    next.assign(layer.out, 0.0);
    for (std::size_t j = 0; j < layer.out; ++j) {
      double z = layer.bias[j];
      const std::size_t row = j * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        if (layer.weight_mask[row + i]) z += layer.weight[row + i] * layer.scale[i] * activation[i];
      }
      next[j] = z;
    }
    if (trace) {
      trace->inputs[l] = activation;
      trace->pre[l] = next;
    }
    if (l < last) {
      for (std::size_t j = 0; j < layer.out; ++j) next[j] = layer.unit_mask[j] ? std::tanh(next[j]) : 0.0;
    }
    activation.swap(next);
  }
  return model.out_shift + model.out_gain * activation[0];
}

// Accumulates coefficient * d raw / d theta into grad.
void run_backward(const Model& model, const Trace& trace, double coefficient, std::vector<double>& grad) {
  std::vector<std::size_t> offsets(model.layers.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    offsets[l] = offset;
    const Layer& layer = model.layers[l];
    offset += layer.out * layer.in + layer.out + layer.in;
  }

  std::vector<double> dz{coefficient * model.out_gain};
  std::vector<double> da;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Layer& layer = model.layers[l];
    const auto& a = trace.inputs[l];
    double* g_weight = grad.data() + offsets[l];
    double* g_bias = g_weight + layer.out * layer.in;
    double* g_scale = g_bias + layer.out;
    da.assign(layer.in, 0.0);
    for (std::size_t j = 0; j < layer.out; ++j) {
      const double d = dz[j];
      if (d == 0.0) continue;
      g_bias[j] += d;
      const std::size_t row = j * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        if (!layer.weight_mask[row + i]) continue;
        g_weight[row + i] += d * layer.scale[i] * a[i];
        da[i] += layer.weight[row + i] * d;  // d loss / d (scaled input)
      }
    }
    for (std::size_t i = 0; i < layer.in; ++i) {
      g_scale[i] += da[i] * a[i];
      da[i] *= layer.scale[i];
    }
    if (l == 0) break;
    const Layer& below = model.layers[l - 1];
    dz.assign(below.out, 0.0);
    for (std::size_t i = 0; i < below.out; ++i) {
      if (below.unit_mask[i]) dz[i] = da[i] * (1.0 - a[i] * a[i]);
    }
  }
}

// Pool-adjacent-violators fit of y against x sorted ascending.
std::vector<double> isotonic_fit(std::span<const double> x, std::span<const double> y) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> level;
  std::vector<std::size_t> count;
  for (std::size_t idx : order) {
    level.push_back(y[idx]);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double merged = (level[level.size() - 2] * count[count.size() - 2] + level.back() * count.back()) /
                            static_cast<double>(count[count.size() - 2] + count.back());
      count[count.size() - 2] += count.back();
      level.pop_back();
      count.pop_back();
      level.back() = merged;
    }
  }
  std::vector<double> fitted(x.size());
  std::size_t pos = 0;
  for (std::size_t b = 0; b < level.size(); ++b) {
    for (std::size_t c = 0; c < count[b]; ++c) fitted[order[pos++]] = level[b];
  }
  return fitted;
}

struct LogisticParams {
  double a, b, c, d;  // lo = a, hi = a + exp(b), center c, width exp(d)

  // The asymptotes are free; predict_mos clamps to [0,100]. Bounding them to
  // [0,100] would keep the map from approaching a straight line.
  ScaleMap to_map() const {
    ScaleMap map;
    map.fitted = true;
    map.lo = a;
    map.hi = a + std::exp(b);
    map.center = c;
    map.width = std::exp(d);
    return map;
  }
};


double sse(const ScaleMap& map, std::span<const double> raw, std::span<const double> target) {
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double r = map.apply(raw[i]) - target[i];
    total += r * r;
  }
  return total;
}

// Levenberg-Marquardt over the unconstrained parameterization.
LogisticParams levenberg_marquardt(LogisticParams p, std::span<const double> raw, std::span<const double> target) {
  double damping = 1e-3;
  double current = sse(p.to_map(), raw, target);
  for (int iter = 0; iter < 300; ++iter) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    const double lo = p.a;
    const double range = std::exp(p.b);
    const double width = std::exp(p.d);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double t = (raw[i] - p.c) / width;
      const double s = sigmoid(t);
      const double residual = lo + range * s - target[i];
      Eigen::Vector4d jac;
      jac << 1.0, range * s, -range * s * (1.0 - s) / width, -range * s * (1.0 - s) * t;
      jtj += jac * jac.transpose();
      jtr += jac * residual;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 20 && !improved; ++attempt) {
      Eigen::Matrix4d system = jtj;
      for (int k = 0; k < 4; ++k) system(k, k) += damping * (jtj(k, k) + 1e-12);
      const Eigen::Vector4d delta = system.ldlt().solve(-jtr);
      LogisticParams trial{p.a + delta(0), p.b + delta(1), p.c + delta(2), p.d + delta(3)};
      const double value = sse(trial.to_map(), raw, target);
      if (std::isfinite(value) && value < current) {
        const double gain = current - value;
        p = trial;
        current = value;
        damping = std::max(damping * 0.3, 1e-12);
        improved = true;
        if (gain <= 1e-12 * (1.0 + current)) return p;
      } else {
        damping *= 10.0;
      }
    }
    if (!improved) break;
  }
  return p;
}

ScaleMap fit_logistic(std::span<const double> raw, std::span<const double> target) {
  const auto [min_raw, max_raw] = std::minmax_element(raw.begin(), raw.end());
  const auto [min_t, max_t] = std::minmax_element(target.begin(), target.end());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
  double spread = 0.0;
  for (double r : raw) spread += (r - mean) * (r - mean);
  spread = std::sqrt(spread / static_cast<double>(raw.size()));

  const double lo0 = std::clamp(*min_t - 2.0, 0.5, 98.0);
  const double hi0 = std::clamp(*max_t + 2.0, lo0 + 1.0, 99.5);
  const double b0 = std::log(hi0 - lo0);
  ScaleMap best;
  double best_sse = INFINITY;
  for (double multiplier : {0.5, 1.0, 2.0, 4.0}) {
    LogisticParams start{lo0, b0, 0.5 * (*min_raw + *max_raw), std::log(spread * multiplier)};
    const LogisticParams fitted = levenberg_marquardt(start, raw, target);
    const ScaleMap map = fitted.to_map();
    const double value = sse(map, raw, target);
    if (std::isfinite(value) && std::isfinite(map.center) && std::isfinite(map.width) && map.width > 0.0 &&
        value < best_sse) {
      best = map;
      best_sse = value;
    }
  }
  return best;
}

json layer_to_json(const Layer& layer) {
  return {{"in", layer.in},         {"out", layer.out},
          {"weight", layer.weight}, {"bias", layer.bias},
          {"scale", layer.scale},   {"weight_mask", layer.weight_mask},
          {"unit_mask", layer.unit_mask}};
}

}  // namespace

double ScaleMap::apply(double raw) const {
  if (!fitted) return raw;
  return lo + (hi - lo) * sigmoid((raw - center) / width);
}

std::vector<std::size_t> Model::widths() const {
  std::vector<std::size_t> out;
  if (layers.empty()) return out;
  out.push_back(layers.front().in);
  for (const auto& layer : layers) out.push_back(layer.out);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers) count += layer.out * layer.in + layer.out + layer.in;
  return count;
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  if (max_epochs < 0) throw std::invalid_argument("epoch count must be non-negative");
}

std::vector<Example> resolve_examples(const LabeledSet& labels, const SampleIndex& pool) {
  std::vector<Example> examples;
  examples.reserve(labels.entries.size());
  for (const auto& [id, entry] : labels.entries) {
    const Sample* sample = pool.find(id);
    if (!sample) throw DataError("labeled id " + id + " does not resolve to a sample");
    examples.push_back({sample->features, entry.mos});
  }
  return examples;
}

Model init_model(std::span<const std::size_t> widths, std::uint64_t seed, std::string id) {
  if (widths.size() < 2) throw std::invalid_argument("a model needs at least an input and an output width");
  if (widths.back() != 1) throw std::invalid_argument("the last width must be 1 (scalar output)");
  if (std::any_of(widths.begin(), widths.end(), [](std::size_t w) { return w == 0; })) {
    throw std::invalid_argument("widths must be positive");
  }
  Rng rng(mix_seed(seed, 0x1a7e5ULL));
  Model model;
  model.id = std::move(id);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(layer.in));
    layer.weight.resize(layer.in * layer.out);
    for (auto& w : layer.weight) w = rng.normal(0.0, sd);
    layer.bias.assign(layer.out, 0.0);
    layer.scale.assign(layer.in, 1.0);
    layer.weight_mask.assign(layer.in * layer.out, 1);
    layer.unit_mask.assign(layer.out, 1);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

double forward(const Model& model, std::span<const double> features) { return run_forward(model, features, nullptr); }

double predict_mos(const Model& model, std::span<const double> features) {
  return std::clamp(model.scale_map.apply(forward(model, features)), 0.0, 100.0);
}

std::vector<double> predict_mos(const Model& model, std::span<const Sample> samples) {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = predict_mos(model, samples[i].features);
  return out;
}

std::vector<double> flatten_parameters(const Model& model) {
  std::vector<double> out;
  out.reserve(model.parameter_count());
  for (const auto& layer : model.layers) {
    out.insert(out.end(), layer.weight.begin(), layer.weight.end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    out.insert(out.end(), layer.scale.begin(), layer.scale.end());
  }
  return out;
}

void assign_parameters(Model& model, std::span<const double> parameters) {
  if (parameters.size() != model.parameter_count()) throw std::invalid_argument("parameter vector size mismatch");
  std::size_t pos = 0;
  for (auto& layer : model.layers) {
    for (auto& w : layer.weight) w = parameters[pos++];
    for (auto& b : layer.bias) b = parameters[pos++];
    for (auto& s : layer.scale) s = parameters[pos++];
  }
}

std::vector<double> output_gradient(const Model& model, std::span<const double> features) {
  Trace trace;
  run_forward(model, features, &trace);
  std::vector<double> grad(model.parameter_count(), 0.0);
  run_backward(model, trace, 1.0, grad);
  return grad;
}

std::vector<double> loss_gradient(const Model& model, std::span<const Example* const> batch, double l1_scale_penalty,
                                  double* mean_loss) {
  std::vector<double> grad(model.parameter_count(), 0.0);
  if (batch.empty()) {
    if (mean_loss) *mean_loss = 0.0;
    return grad;
  }
  // The data term is measured in head units (MOS / out_gain) so the l1
  // penalty has a scale-free meaning; Adam is invariant to the constant.
  const double head = model.out_gain * model.out_gain;
  Trace trace;
  double total = 0.0;
  for (const Example* example : batch) {
    const double residual = run_forward(model, example->x, &trace) - example->y;
    total += residual * residual;
    run_backward(model, trace, 2.0 * residual / (static_cast<double>(batch.size()) * head), grad);
  }
  if (l1_scale_penalty > 0.0) {
    std::size_t offset = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const Layer& layer = model.layers[l];
      const std::size_t scale_offset = offset + layer.out * layer.in + layer.out;
      if (l > 0) {
        for (std::size_t i = 0; i < layer.in; ++i) {
          const double s = layer.scale[i];
          grad[scale_offset + i] += l1_scale_penalty * (s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0));
        }
      }
      offset = scale_offset + layer.in;
    }
  }
  if (mean_loss) *mean_loss = total / static_cast<double>(batch.size());
  return grad;
}

double mean_squared_error(const Model& model, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& example : data) {
    const double r = forward(model, example.x) - example.y;
    total += r * r;
  }
  return total / static_cast<double>(data.size());
}

void enforce_constraints(Model& model) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Layer& layer = model.layers[l];
    for (std::size_t k = 0; k < layer.weight.size(); ++k) {
      if (!layer.weight_mask[k]) layer.weight[k] = 0.0;
    }
    for (auto& s : layer.scale) s = std::max(s, kMinScale);
  }
}

AdamOptimizer::AdamOptimizer(std::size_t parameter_count, AdamConfig config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void AdamOptimizer::step(Model& model, std::span<const double> gradient) {
  ++steps_;
  const double correction1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  std::size_t pos = 0;
  auto update = [&](double& parameter) {
    const double g = gradient[pos];
    m_[pos] = config_.beta1 * m_[pos] + (1.0 - config_.beta1) * g;
    v_[pos] = config_.beta2 * v_[pos] + (1.0 - config_.beta2) * g * g;
    parameter -= config_.learning_rate * (m_[pos] / correction1) / (std::sqrt(v_[pos] / correction2) + config_.epsilon);
    ++pos;
  };
  for (auto& layer : model.layers) {
    for (auto& w : layer.weight) update(w);
    for (auto& b : layer.bias) update(b);
    for (auto& s : layer.scale) update(s);
  }
  enforce_constraints(model);
}

TrainResult train(Model model, std::span<const Example> data, const TrainConfig& config) {
  config.validate();
  TrainResult result;
  result.loss_trace.push_back(mean_squared_error(model, data));
  if (config.max_epochs == 0 || data.empty()) {
    result.model = std::move(model);
    return result;
  }
  enforce_constraints(model);
  AdamOptimizer optimizer(model.parameter_count(), config.adam);
  Rng rng(mix_seed(config.seed, 0x7a1aULL));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const Example*> batch;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) batch.push_back(&data[order[k]]);
      double loss = 0.0;
      const auto grad = loss_gradient(model, batch, config.l1_scale_penalty, &loss);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("training " + model.id + ": non-finite loss at epoch " + std::to_string(epoch));
      }
      optimizer.step(model, grad);
    }
    const double epoch_loss = mean_squared_error(model, data);
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("training " + model.id + ": non-finite loss after epoch " + std::to_string(epoch));
    }
    result.loss_trace.push_back(epoch_loss);
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(Model model, const LabeledSet& labels, const SampleIndex& pool, const TrainConfig& config) {
  const auto examples = resolve_examples(labels, pool);
  return train(std::move(model), examples, config);
}

ScaleMap fit_scale_map(std::span<const double> raw, std::span<const double> mos) {
  if (raw.size() != mos.size()) throw std::invalid_argument("calibration raw/mos length mismatch");
  if (raw.size() < 10) throw std::invalid_argument("scale map needs at least 10 calibration points");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (!(*hi > *lo)) throw std::invalid_argument("degenerate calibration: raw outputs are constant");

  ScaleMap map = fit_logistic(raw, mos);
  if (!map.fitted) {
    // Fall back to fitting the isotonic regression of the targets.
    const auto smoothed = isotonic_fit(raw, mos);
    map = fit_logistic(raw, smoothed);
  }
  if (!map.fitted) throw std::runtime_error("scale map fit diverged");
  return map;
}

ScaleMap fit_scale_map(const Model& model, std::span<const Example> calibration) {
  std::vector<double> raw(calibration.size()), mos(calibration.size());
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    raw[i] = forward(model, calibration[i].x);
    mos[i] = calibration[i].y;
  }
  return fit_scale_map(raw, mos);
}

std::string model_to_json(const Model& model) {
  json layers = json::array();
  for (const auto& layer : model.layers) layers.push_back(layer_to_json(layer));
  json doc = {
      {"format", "selfgmad-model"},
      {"version", kModelFormatVersion},
      {"id", model.id},
      {"widths", model.widths()},
      {"out_shift", model.out_shift},
      {"out_gain", model.out_gain},
      {"layers", layers},
      {"scale_map",
       {{"fitted", model.scale_map.fitted},
        {"lo", model.scale_map.lo},
        {"hi", model.scale_map.hi},
        {"center", model.scale_map.center},
        {"width", model.scale_map.width}}},
      {"lineage",
       {{"parent", model.lineage.parent},
        {"criterion", model.lineage.criterion},
        {"ratio", model.lineage.ratio},
        {"round", model.lineage.round}}},
  };
  return doc.dump();
}

Model model_from_json(const std::string& text) {
  Model model;
  try {
    const json doc = json::parse(text);
    if (doc.at("format") != "selfgmad-model") throw DataError("not a model file");
    if (doc.at("version").get<int>() != kModelFormatVersion) throw DataError("unsupported model version");
    model.id = doc.at("id").get<std::string>();
    model.out_shift = doc.at("out_shift").get<double>();
    model.out_gain = doc.at("out_gain").get<double>();
    for (const auto& item : doc.at("layers")) {
      Layer layer;
      layer.in = item.at("in").get<std::size_t>();
      layer.out = item.at("out").get<std::size_t>();
      layer.weight = item.at("weight").get<std::vector<double>>();
      layer.bias = item.at("bias").get<std::vector<double>>();
      layer.scale = item.at("scale").get<std::vector<double>>();
      layer.weight_mask = item.at("weight_mask").get<std::vector<std::uint8_t>>();
      layer.unit_mask = item.at("unit_mask").get<std::vector<std::uint8_t>>();
      if (layer.weight.size() != layer.in * layer.out || layer.weight_mask.size() != layer.weight.size() ||
          layer.bias.size() != layer.out || layer.unit_mask.size() != layer.out || layer.scale.size() != layer.in) {
        throw DataError("layer shape mismatch");
      }
      if (!model.layers.empty() && model.layers.back().out != layer.in) throw DataError("layer chain mismatch");
      model.layers.push_back(std::move(layer));
    }
    if (model.layers.empty() || model.layers.back().out != 1) throw DataError("model must end in a scalar layer");
    const auto& map = doc.at("scale_map");
    model.scale_map = {map.at("fitted").get<bool>(), map.at("lo").get<double>(), map.at("hi").get<double>(),
                       map.at("center").get<double>(), map.at("width").get<double>()};
    const auto& lineage = doc.at("lineage");
    model.lineage = {lineage.at("parent").get<std::string>(), lineage.at("criterion").get<std::string>(),
                     lineage.at("ratio").get<double>(), lineage.at("round").get<int>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("bad model json: ") + e.what());
  }
  return model;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << model_to_json(model) << '\n';
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return model_from_json(buffer.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace selfgmad
