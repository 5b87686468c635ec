#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfgmad/datapool.hpp"
#include "selfgmad/gmad.hpp"

namespace selfgmad {

struct SubjectProfile {
  std::string subject_id;
  double bias = 0.0;      // additive, MOS units
  double noise_sd = 0.0;  // Gaussian noise, MOS units
  double outlier_prob = 0.0;
  std::uint64_t seed = 0;
};

struct PanelConfig {
  std::size_t subjects = 20;
  double bias_sd = 3.0;
  double noise_sd_min = 2.0;
  double noise_sd_max = 6.0;
  double outlier_prob = 0.03;
  std::uint64_t seed = 2020;
};

/// Draws a panel of simulated subjects s01..sNN.
std::vector<SubjectProfile> simulated_panel(const PanelConfig& config);

/// clamp(oracle + bias + N(0, noise_sd), 0, 100), replaced by U[0,100] with
/// probability outlier_prob. Randomness depends only on (profile seed,
/// sample id), so the presentation order never changes a rating.
double oracle_rate(const Sample& sample, const SubjectProfile& profile);

enum class RatingFlag { Kept, OutlierRemoved };

struct RatingRecord {
  std::string pair_id;
  std::string sample_id;
  std::string subject_id;
  double rating = 0.0;
  RatingFlag flag = RatingFlag::Kept;

  bool operator==(const RatingRecord&) const = default;
};

struct SubjectScreening {
  std::string subject_id;
  std::size_t ratings = 0;
  std::size_t above = 0;  // P: ratings above the screening band
  std::size_t below = 0;  // N: ratings below it
  bool rejected = false;
};

struct ScreeningConfig {
  double subject_outlier_fraction = 0.05;
  double one_sided_limit = 0.3;
};

struct CleaningResult {
  std::vector<RatingRecord> ratings;  // input order, flags recomputed, excluded samples dropped
  std::vector<SubjectScreening> subjects;
  std::vector<std::string> excluded_samples;  // fewer than 3 ratings
  std::size_t removed = 0;
  double removal_rate = 0.0;
};

/// Screening in the style of ITU-R BT.500. The population kurtosis of all
/// ratings of a sample picks the band width (2 when 2 <= kurtosis <= 4, else
/// sqrt(20)); each rating is tested against mean +/- width * sd (n-1) of the
/// other ratings of that sample. A subject is rejected when more than 5% of their
/// ratings fall outside the band and the excursions are two-sided
/// (|P-N|/(P+N) < 0.3). Flags are a pure function of the rating values, so
/// a second pass reproduces the first. Incoming flags are ignored.
CleaningResult reject_outliers(std::vector<RatingRecord> ratings, const ScreeningConfig& config = {});

/// Mean, sd (n-1; 0 for one rating) and count of kept ratings per sample.
std::map<std::string, LabelEntry> compute_mos(std::span<const RatingRecord> ratings);

enum class CaseLabel { I, II, III, IV };
std::string_view case_name(CaseLabel label);

/// Attacker consistent <=> mos(x) - mos(y) > T; defender consistent <=>
/// |mos(x) - mos(y)| <= T. Mapped through which side the target holds:
/// both consistent -> I, only competitor -> II, only target -> III, neither -> IV.
CaseLabel classify_case(const GmadPair& pair, const std::string& target_id, double mos_x, double mos_y,
                        double threshold);

struct CaseSummary {
  std::map<std::string, CaseLabel> by_pair;
  std::size_t excluded = 0;  // pairs with an unlabeled image
  // counts[role][case], role 0 = competitor attacks target, 1 = target attacks
  std::array<std::array<std::size_t, 4>, 2> counts{};
};

CaseSummary classify_cases(std::span<const GmadPair> pairs, const std::string& target_id, const LabeledSet& labels,
                           double threshold);

// ratings.jsonl / cases.csv
void write_ratings(const std::filesystem::path& path, std::span<const RatingRecord> ratings);
std::vector<RatingRecord> load_ratings(const std::filesystem::path& path);
void write_cases(const std::filesystem::path& path, std::span<const GmadPair> pairs, const CaseSummary& summary);

}  // namespace selfgmad
