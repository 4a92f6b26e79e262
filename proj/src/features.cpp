#include "fewshot/features.hpp"

#include <algorithm>
#include <cmath>

namespace fewshot {

std::array<double, 4> DistanceStats::summary() const {
  if (count == 0) return {0.0, 0.0, 0.0, 0.0};
  const double n = static_cast<double>(count);
  const double mean = sum / n;
  const double var = std::max(0.0, sumsq / n - mean * mean);
  return {mean, min, max, var};
}

FeatureContext::FeatureContext(const SearchSpace& space,
                               const std::vector<EvaluationRecord>& evaluated, int epoch,
                               int total_epochs, const GbmEnsemble* gbm)
    : space_(&space),
      evaluated_(&evaluated),
      epoch_(epoch),
      total_epochs_(total_epochs),
      gbm_(gbm),
      fmin_(std::numeric_limits<double>::infinity()) {
  if (total_epochs < 1 || epoch < 1 || epoch > total_epochs)
    fail(ErrorKind::contract, "feature context needs 1 <= epoch <= total epochs");
  evaluated_unit_.reserve(evaluated.size());
  for (const auto& r : evaluated) {
    evaluated_unit_.push_back(normalize_point(r.point, space));
    fmin_ = std::min(fmin_, r.value);
  }
}

DiversityFeatures diversity_features(const Candidate& c, const FeatureContext& ctx) {
  DistanceStats evaluated, batch, same;
  for (const auto& u : ctx.evaluated_unit()) evaluated.add(euclidean_distance(c.unit, u));
  for (const Candidate* b : ctx.batch) {
    const double d = euclidean_distance(c.unit, b->unit);
    batch.add(d);
    if (b->generator == c.generator) same.add(d);
  }
  DiversityFeatures out{};
  const auto a = evaluated.summary(), b = batch.summary(), s = same.summary();
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + 4);
  std::copy(s.begin(), s.end(), out.begin() + 8);
  return out;
}

DynamicFeatures dynamic_features(const Candidate& c, const FeatureContext& ctx) {
  DynamicFeatures out{};
  const auto& history = ctx.evaluated();
  if (!history.empty()) {
    std::size_t same = 0, with_prediction = 0;
    double sum = 0.0, min = std::numeric_limits<double>::infinity(), deviation = 0.0;
    for (const auto& r : history) {
      if (r.generator != c.generator) continue;
      ++same;
      sum += r.value;
      min = std::min(min, r.value);
      if (r.predicted) {
        ++with_prediction;
        deviation += std::abs(*r.predicted - r.value);
      }
    }
    out[0] = static_cast<double>(same) / static_cast<double>(history.size());
    if (same > 0) {
      const double mean = sum / static_cast<double>(same);
      double var = 0.0;
      for (const auto& r : history)
        if (r.generator == c.generator) var += (r.value - mean) * (r.value - mean);
      out[1] = mean;
      out[2] = min;
      out[3] = std::sqrt(var / static_cast<double>(same));
      out[4] = with_prediction > 0 ? deviation / static_cast<double>(with_prediction) : 0.0;
    }
  }
  if (const GbmEnsemble* gbm = ctx.gbm()) {
    const auto pred = gbm->predict(c.unit);
    const auto pi = prob_improvement(*gbm, c.unit, ctx.fmin());
    out[5] = pred.mu;
    out[6] = pi.pi;
    out[7] = pi.uncertainty;
  }
  return out;
}

StaticFeatures static_features(const Candidate& c, const FeatureContext& ctx) {
  StaticFeatures out{};
  out[index_of(c.generator)] = 1.0;
  out[kEpochsRemainingIndex - kOneHotOffset] =
      static_cast<double>(ctx.total_epochs() - ctx.epoch() + 1) / static_cast<double>(ctx.total_epochs());
  return out;
}

FeatureVector raw_features(const Candidate& c, const FeatureContext& ctx) {
  FeatureVector f{};
  const auto div = diversity_features(c, ctx);
  const auto dyn = dynamic_features(c, ctx);
  const auto st = static_features(c, ctx);
  std::copy(div.begin(), div.end(), f.begin());
  std::copy(dyn.begin(), dyn.end(), f.begin() + kDynamicOffset);
  std::copy(st.begin(), st.end(), f.begin() + kOneHotOffset);
  return f;
}

void normalize_columns(std::vector<FeatureVector>& vectors, std::size_t first, std::size_t last) {
  if (vectors.empty()) return;
  for (std::size_t j = first; j < last; ++j) {
    double lo = vectors.front()[j], hi = lo;
    for (const auto& v : vectors) {
      lo = std::min(lo, v[j]);
      hi = std::max(hi, v[j]);
    }
    if (hi > lo) {
      const double range = hi - lo;
      for (auto& v : vectors) v[j] = (v[j] - lo) / range;
    } else {
      for (auto& v : vectors) v[j] = 0.0;
    }
  }
}

void normalize_features(std::vector<FeatureVector>& vectors) {
  normalize_columns(vectors, 0, kNormalizedCount);
}

}  // namespace fewshot
