#include "selfgmad/subjective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "selfgmad/error.hpp"
#include "selfgmad/rng.hpp"

namespace selfgmad {

using nlohmann::json;

namespace {

std::string subject_name(std::size_t index) {
  std::string digits = std::to_string(index + 1);
  if (digits.size() < 2) digits.insert(0, 1, '0');
  return "s" + digits;
}

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

// Population kurtosis of all ratings of a sample; picks the band width.
double band_width(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  if (m2 <= 0.0) return 2.0;
  const double kurtosis = m4 / (m2 * m2);
  return kurtosis < 2.0 || kurtosis > 4.0 ? std::sqrt(20.0) : 2.0;
}

// Band centre and spread from the other ratings of the same sample.
Band leave_one_out_band(std::span<const double> values, std::size_t skip, double width) {
  const double n = static_cast<double>(values.size() - 1);
  double mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != skip) mean += values[i];
  }
  mean /= n;
  double m2 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i == skip) continue;
    const double d = values[i] - mean;
    m2 += d * d;
  }
  const double sd = std::sqrt(m2 / (n - 1.0));
  return {mean - width * sd, mean + width * sd};
}

std::string_view flag_name(RatingFlag flag) { return flag == RatingFlag::Kept ? "kept" : "outlier-removed"; }

RatingFlag parse_flag(const std::string& text) {
  if (text == "kept") return RatingFlag::Kept;
  if (text == "outlier-removed") return RatingFlag::OutlierRemoved;
  throw DataError("unknown rating flag " + text);
}

}  // namespace

std::vector<SubjectProfile> simulated_panel(const PanelConfig& config) {
  if (config.noise_sd_min < 0.0 || config.noise_sd_max < config.noise_sd_min) {
    throw std::invalid_argument("bad noise range for simulated panel");
  }
  if (config.outlier_prob < 0.0 || config.outlier_prob >= 1.0) throw std::invalid_argument("outlier_prob must lie in [0,1)");
  Rng rng(mix_seed(config.seed, "panel"));
  std::vector<SubjectProfile> panel;
  panel.reserve(config.subjects);
  for (std::size_t i = 0; i < config.subjects; ++i) {
    SubjectProfile p;
    p.subject_id = subject_name(i);
    p.bias = rng.normal(0.0, config.bias_sd);
    p.noise_sd = rng.uniform(config.noise_sd_min, config.noise_sd_max);
    p.outlier_prob = config.outlier_prob;
    p.seed = rng.next();
    panel.push_back(std::move(p));
  }
  return panel;
}

double oracle_rate(const Sample& sample, const SubjectProfile& profile) {
  const double quality = oracle_quality(sample);
  Rng rng(mix_seed(profile.seed, sample.id));
  const double u = rng.uniform();
  const double lapse = rng.uniform(0.0, 100.0);
  const double noise = rng.normal();
  if (u < profile.outlier_prob) return lapse;
  return std::clamp(quality + profile.bias + profile.noise_sd * noise, 0.0, 100.0);
}

CleaningResult reject_outliers(std::vector<RatingRecord> ratings, const ScreeningConfig& config) {
  CleaningResult result;

  std::map<std::string, std::vector<std::size_t>> by_sample;
  for (std::size_t i = 0; i < ratings.size(); ++i) by_sample[ratings[i].sample_id].push_back(i);

  std::vector<std::uint8_t> drop(ratings.size(), 0);
  std::vector<std::int8_t> side(ratings.size(), 0);  // +1 above band, -1 below
  for (const auto& [sample_id, indices] : by_sample) {
    if (indices.size() < 3) {
      result.excluded_samples.push_back(sample_id);
      for (auto i : indices) drop[i] = 1;
      continue;
    }
    std::vector<double> values;
    values.reserve(indices.size());
    for (auto i : indices) values.push_back(ratings[i].rating);
    const double width = band_width(values);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const Band band = leave_one_out_band(values, k, width);
      if (values[k] > band.hi) side[indices[k]] = 1;
      if (values[k] < band.lo) side[indices[k]] = -1;
    }
  }

  std::map<std::string, SubjectScreening> subjects;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (drop[i]) continue;
    auto& s = subjects[ratings[i].subject_id];
    s.subject_id = ratings[i].subject_id;
    ++s.ratings;
    if (side[i] > 0) ++s.above;
    if (side[i] < 0) ++s.below;
  }
  for (auto& [id, s] : subjects) {
    const double flagged = static_cast<double>(s.above + s.below);
    if (s.ratings == 0 || flagged == 0.0) continue;
    const double fraction = flagged / static_cast<double>(s.ratings);
    const double skew = std::abs(static_cast<double>(s.above) - static_cast<double>(s.below)) / flagged;
    s.rejected = fraction > config.subject_outlier_fraction && skew < config.one_sided_limit;
  }

  std::size_t total = 0;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (drop[i]) continue;
    RatingRecord r = std::move(ratings[i]);
    const bool removed = side[i] != 0 || subjects[r.subject_id].rejected;
    r.flag = removed ? RatingFlag::OutlierRemoved : RatingFlag::Kept;
    result.removed += removed ? 1 : 0;
    ++total;
    result.ratings.push_back(std::move(r));
  }
  result.removal_rate = total ? static_cast<double>(result.removed) / static_cast<double>(total) : 0.0;
  for (auto& [id, s] : subjects) result.subjects.push_back(s);
  return result;
}

std::map<std::string, LabelEntry> compute_mos(std::span<const RatingRecord> ratings) {
  std::map<std::string, std::vector<double>> grouped;
  for (const auto& r : ratings) {
    if (r.flag == RatingFlag::Kept) grouped[r.sample_id].push_back(r.rating);
  }
  std::map<std::string, LabelEntry> out;
  for (auto& [id, values] : grouped) {
    // Summation order fixed so the mean does not depend on input order.
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double n = static_cast<double>(values.size());
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    LabelEntry e;
    e.mos = std::clamp(mean, 0.0, 100.0);
    e.std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    e.n_ratings = static_cast<int>(values.size());
    out.emplace(id, e);
  }
  return out;
}

std::string_view case_name(CaseLabel label) {
  switch (label) {
    case CaseLabel::I: return "I";
    case CaseLabel::II: return "II";
    case CaseLabel::III: return "III";
    case CaseLabel::IV: return "IV";
  }
  return "?";
}

CaseLabel classify_case(const GmadPair& pair, const std::string& target_id, double mos_x, double mos_y,
                        double threshold) {
  const double gap = mos_x - mos_y;
  const bool attacker_ok = gap > threshold;
  const bool defender_ok = std::abs(gap) <= threshold;
  bool target_ok = false;
  bool competitor_ok = false;
  if (pair.attacker == target_id) {
    target_ok = attacker_ok;
    competitor_ok = defender_ok;
  } else if (pair.defender == target_id) {
    target_ok = defender_ok;
    competitor_ok = attacker_ok;
  } else {
    throw std::invalid_argument("target " + target_id + " plays no role in pair " + pair.pair_id);
  }
  if (target_ok && competitor_ok) return CaseLabel::I;
  if (competitor_ok) return CaseLabel::II;
  if (target_ok) return CaseLabel::III;
  return CaseLabel::IV;
}

CaseSummary classify_cases(std::span<const GmadPair> pairs, const std::string& target_id, const LabeledSet& labels,
                           double threshold) {
  CaseSummary summary;
  for (const auto& p : pairs) {
    auto x = labels.entries.find(p.x_id);
    auto y = labels.entries.find(p.y_id);
    if (x == labels.entries.end() || y == labels.entries.end()) {
      ++summary.excluded;
      continue;
    }
    const CaseLabel label = classify_case(p, target_id, x->second.mos, y->second.mos, threshold);
    summary.by_pair[p.pair_id] = label;
    const std::size_t role = p.defender == target_id ? 0 : 1;
    ++summary.counts[role][static_cast<std::size_t>(label)];
  }
  return summary;
}

void write_ratings(const std::filesystem::path& path, std::span<const RatingRecord> ratings) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : ratings) {
    json record = {{"pair_id", r.pair_id},
                   {"sample_id", r.sample_id},
                   {"subject_id", r.subject_id},
                   {"rating", r.rating},
                   {"flag", flag_name(r.flag)}};
    out << record.dump() << '\n';
  }
}

std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RatingRecord> ratings;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json r = json::parse(line);
      RatingRecord rec;
      rec.pair_id = r.at("pair_id").get<std::string>();
      rec.sample_id = r.at("sample_id").get<std::string>();
      rec.subject_id = r.at("subject_id").get<std::string>();
      rec.rating = r.at("rating").get<double>();
      rec.flag = r.contains("flag") ? parse_flag(r.at("flag").get<std::string>()) : RatingFlag::Kept;
      if (!(rec.rating >= 0.0 && rec.rating <= 100.0)) throw DataError("rating outside [0,100]");
      ratings.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ratings;
}

void write_cases(const std::filesystem::path& path, std::span<const GmadPair> pairs, const CaseSummary& summary) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "pair_id,attacker,defender,level,case\n";
  for (const auto& p : pairs) {
    auto it = summary.by_pair.find(p.pair_id);
    const std::string_view label = it == summary.by_pair.end() ? std::string_view("excluded") : case_name(it->second);
    out << p.pair_id << ',' << p.attacker << ',' << p.defender << ',' << p.level << ',' << label << '\n';
  }
}

}  // namespace selfgmad
