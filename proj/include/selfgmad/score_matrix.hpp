#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace selfgmad {

/// Dense model x sample table of scores. Each model's scores over the
/// sample axis are contiguous.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::vector<std::string> model_ids, std::vector<std::string> sample_ids);

  std::size_t models() const { return model_ids_.size(); }
  std::size_t samples() const { return sample_ids_.size(); }
  const std::vector<std::string>& model_ids() const { return model_ids_; }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }

  std::span<const double> row(std::size_t model) const {
    return {values_.data() + model * samples(), samples()};
  }
  std::span<double> row(std::size_t model) { return {values_.data() + model * samples(), samples()}; }
  /// Throws DataError for an unknown model id.
  std::span<const double> row(std::string_view model_id) const;

  double at(std::size_t model, std::size_t sample) const { return values_[model * samples() + sample]; }
  double& at(std::size_t model, std::size_t sample) { return values_[model * samples() + sample]; }

  std::optional<std::size_t> model_index(std::string_view id) const;
  std::optional<std::size_t> sample_index(std::string_view id) const;

  /// Throws DataError if any entry is non-finite.
  void validate() const;

  bool operator==(const ScoreMatrix& other) const {
    return model_ids_ == other.model_ids_ && sample_ids_ == other.sample_ids_ && values_ == other.values_;
  }

 private:
  std::vector<std::string> model_ids_;
  std::vector<std::string> sample_ids_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> model_lookup_;
  std::unordered_map<std::string, std::size_t> sample_lookup_;
};

}  // namespace selfgmad
