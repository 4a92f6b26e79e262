#pragma once

#include <array>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "fewshot/core.hpp"
#include "fewshot/generators.hpp"
#include "fewshot/surrogate.hpp"

namespace fewshot {

// Feature layout (docs/feature_layout.md). Weight files carry the version
// string and are rejected when it does not match.
//
//   0-11  diversity: [mean, min, max, variance] of unit-cube distances to
//         (a) evaluated points, (b) the batch under construction,
//         (c) batch members from the same generator
//   12-19 dynamic: same-generator share of the history, mean/min/std of its
//         values, mean |predicted - true|, GBM mu, PI, PI uncertainty
//   20-27 one-hot generator (GeneratorId order)
//   28    ratio of epochs remaining, (E - epoch + 1) / E
inline constexpr std::string_view kFeatureLayoutVersion = "fewshot-features-v1";
inline constexpr std::size_t kFeatureCount = 29;
inline constexpr std::size_t kDiversityCount = 12;
inline constexpr std::size_t kDynamicOffset = 12;
inline constexpr std::size_t kDynamicCount = 8;
inline constexpr std::size_t kOneHotOffset = 20;
inline constexpr std::size_t kEpochsRemainingIndex = 28;
inline constexpr std::size_t kNormalizedCount = 20;

using FeatureVector = std::array<double, kFeatureCount>;
using DiversityFeatures = std::array<double, kDiversityCount>;
using DynamicFeatures = std::array<double, kDynamicCount>;
using StaticFeatures = std::array<double, kFeatureCount - kOneHotOffset>;

/// Running distance statistics. Summary is [mean, min, max, population
/// variance]; an empty set summarizes to zeros.
struct DistanceStats {
  std::size_t count = 0;
  double sum = 0.0;
  double sumsq = 0.0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();

  void add(double d) {
    ++count;
    sum += d;
    sumsq += d * d;
    if (d < min) min = d;
    if (d > max) max = d;
  }
  std::array<double, 4> summary() const;
};

class FeatureContext {
 public:
  FeatureContext(const SearchSpace& space, const std::vector<EvaluationRecord>& evaluated,
                 int epoch, int total_epochs, const GbmEnsemble* gbm);

  const SearchSpace& space() const { return *space_; }
  const std::vector<EvaluationRecord>& evaluated() const { return *evaluated_; }
  const std::vector<std::vector<double>>& evaluated_unit() const { return evaluated_unit_; }
  int epoch() const { return epoch_; }
  int total_epochs() const { return total_epochs_; }
  const GbmEnsemble* gbm() const { return gbm_ && gbm_->trained() ? gbm_ : nullptr; }
  /// Best value so far (+inf before the first evaluation).
  double fmin() const { return fmin_; }

  /// The batch under construction (S together with the simulated additions).
  std::vector<const Candidate*> batch;

 private:
  const SearchSpace* space_;
  const std::vector<EvaluationRecord>* evaluated_;
  std::vector<std::vector<double>> evaluated_unit_;
  int epoch_;
  int total_epochs_;
  const GbmEnsemble* gbm_;
  double fmin_;
};

DiversityFeatures diversity_features(const Candidate& c, const FeatureContext& ctx);
DynamicFeatures dynamic_features(const Candidate& c, const FeatureContext& ctx);
StaticFeatures static_features(const Candidate& c, const FeatureContext& ctx);
FeatureVector raw_features(const Candidate& c, const FeatureContext& ctx);

/// Min-max scales columns [first, last) across the vectors; a constant
/// column becomes all zeros.
void normalize_columns(std::vector<FeatureVector>& vectors, std::size_t first, std::size_t last);
/// Normalizes the diversity and dynamic columns (0-19); 20-28 are untouched.
void normalize_features(std::vector<FeatureVector>& vectors);

}  // namespace fewshot
