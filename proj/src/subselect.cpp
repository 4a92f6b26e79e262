#include "fewshot/subselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fewshot {

double logistic_score(std::span<const double> features, const WeightVector& w) {
  if (features.size() != w.values.size())
    fail(ErrorKind::contract, "logistic_score: feature/weight length mismatch");
  double z = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) z += w.values[i] * features[i];
  z = std::clamp(z, -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(z));
}

std::size_t sample_next(std::span<const std::size_t> remaining, std::span<const double> scores,
                        RngStream& rng) {
  if (remaining.empty()) fail(ErrorKind::contract, "sample_next: nothing left to sample");
  if (scores.size() < remaining.size()) fail(ErrorKind::contract, "sample_next: missing scores");
  double total = 0.0;
  for (std::size_t i = 0; i < remaining.size(); ++i) total += scores[i];
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    u -= scores[i];
    if (u < 0.0) return remaining[i];
  }
  // Rounding left a sliver of mass past the last candidate.
  for (std::size_t i = remaining.size(); i-- > 0;)
    if (scores[i] > 0.0) return remaining[i];
  return remaining.back();
}

// ---------------------------------------------------------------------------

FeatureScorer::FeatureScorer(const std::vector<Candidate>& pool, const FeatureContext& ctx,
                             const WeightVector& w)
    : weights_(w), n_(pool.size()) {
  const std::size_t n = n_;
  generator_.reserve(n);
  for (const auto& c : pool) generator_.push_back(static_cast<std::uint8_t>(index_of(c.generator)));
  for (std::size_t c = 0; c < n; ++c) members_[generator_[c]].push_back(c);

  distance_.assign(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      distance_[a * n + b] = distance_[b * n + a] = euclidean_distance(pool[a].unit, pool[b].unit);

  for (auto& col : evaluated_) col.resize(n);
  fixed_.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    DistanceStats s;
    for (const auto& u : ctx.evaluated_unit()) s.add(euclidean_distance(pool[c].unit, u));
    const auto summary = s.summary();
    FeatureVector f{};
    const auto dyn = dynamic_features(pool[c], ctx);
    const auto st = static_features(pool[c], ctx);
    std::copy(summary.begin(), summary.end(), f.begin());
    std::copy(dyn.begin(), dyn.end(), f.begin() + kDynamicOffset);
    std::copy(st.begin(), st.end(), f.begin() + kOneHotOffset);
    for (std::size_t j = 0; j < kFeatureCount; ++j)
      if (!std::isfinite(f[j]))
        fail(ErrorKind::runtime, "candidate " + std::to_string(c) + ": feature " +
                                     std::to_string(j) + " is not finite");
    for (std::size_t j = 0; j < 4; ++j) evaluated_[j][c] = summary[j];
    fixed_[c] = f;
  }
  normalize_columns(fixed_, kDynamicOffset, kNormalizedCount);

  fixed_logit_.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    double z = 0.0;
    for (std::size_t j = kDynamicOffset; j < kFeatureCount; ++j) z += w.values[j] * fixed_[c][j];
    fixed_logit_[c] = z;
  }
  for (auto* v : {&b_sum_, &b_sumsq_, &b_min_, &b_max_, &s_sum_, &s_sumsq_, &s_min_, &s_max_})
    v->resize(n);
  cols_.resize(kDiversityCount * n);
  begin({});
}

void FeatureScorer::begin(std::span<const std::size_t> batch) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  batch_count_ = 0;
  same_count_.fill(0);
  std::fill(b_sum_.begin(), b_sum_.end(), 0.0);
  std::fill(b_sumsq_.begin(), b_sumsq_.end(), 0.0);
  std::fill(b_min_.begin(), b_min_.end(), inf);
  std::fill(b_max_.begin(), b_max_.end(), -inf);
  std::fill(s_sum_.begin(), s_sum_.end(), 0.0);
  std::fill(s_sumsq_.begin(), s_sumsq_.end(), 0.0);
  std::fill(s_min_.begin(), s_min_.end(), inf);
  std::fill(s_max_.begin(), s_max_.end(), -inf);
  for (std::size_t b : batch) add(b);
}

void FeatureScorer::add(std::size_t index) {
  const std::size_t n = n_;
  const double* row = &distance_[index * n];
  const std::uint8_t g = generator_[index];
  ++batch_count_;
  ++same_count_[g];
  for (std::size_t c = 0; c < n; ++c) {
    const double d = row[c];
    b_sum_[c] += d;
    b_sumsq_[c] += d * d;
    b_min_[c] = d < b_min_[c] ? d : b_min_[c];
    b_max_[c] = d > b_max_[c] ? d : b_max_[c];
  }
  for (std::size_t c : members_[g]) {
    const double d = row[c];
    s_sum_[c] += d;
    s_sumsq_[c] += d * d;
    s_min_[c] = d < s_min_[c] ? d : s_min_[c];
    s_max_[c] = d > s_max_[c] ? d : s_max_[c];
  }
}

void FeatureScorer::diversity_columns(std::span<const std::size_t> remaining) {
  const std::size_t m = remaining.size();
  double* col[kDiversityCount];
  for (std::size_t j = 0; j < kDiversityCount; ++j) col[j] = &cols_[j * n_];
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t i = 0; i < m; ++i) col[j][i] = evaluated_[j][remaining[i]];
  // Same formulas as DistanceStats::summary.
  if (batch_count_ == 0) {
    for (std::size_t j = 4; j < 8; ++j) std::fill(col[j], col[j] + m, 0.0);
  } else {
    const double k = static_cast<double>(batch_count_);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t c = remaining[i];
      const double mean = b_sum_[c] / k;
      col[4][i] = mean;
      col[5][i] = b_min_[c];
      col[6][i] = b_max_[c];
      col[7][i] = std::max(0.0, b_sumsq_[c] / k - mean * mean);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t c = remaining[i];
    const std::size_t count = same_count_[generator_[c]];
    if (count == 0) {
      col[8][i] = col[9][i] = col[10][i] = col[11][i] = 0.0;
    } else {
      const double k = static_cast<double>(count);
      const double mean = s_sum_[c] / k;
      col[8][i] = mean;
      col[9][i] = s_min_[c];
      col[10][i] = s_max_[c];
      col[11][i] = std::max(0.0, s_sumsq_[c] / k - mean * mean);
    }
  }
}

void FeatureScorer::score(std::span<const std::size_t> remaining, std::span<double> out) {
  const std::size_t m = remaining.size();
  if (m == 0) return;
  diversity_columns(remaining);
  // sum_j w_j (v_j - lo_j) / range_j, folded into one coefficient per column.
  std::array<double, kDiversityCount> coef{};
  double offset = 0.0;
  for (std::size_t j = 0; j < kDiversityCount; ++j) {
    const double w = weights_.values[j];
    if (w == 0.0) continue;
    const double* col = &cols_[j * n_];
    double lo = col[0], hi = col[0];
    for (std::size_t i = 1; i < m; ++i) {
      lo = col[i] < lo ? col[i] : lo;
      hi = col[i] > hi ? col[i] : hi;
    }
    if (!(hi > lo)) continue;
    coef[j] = w / (hi - lo);
    offset -= coef[j] * lo;
  }
  for (std::size_t i = 0; i < m; ++i) out[i] = fixed_logit_[remaining[i]] + offset;
  for (std::size_t j = 0; j < kDiversityCount; ++j) {
    if (coef[j] == 0.0) continue;
    const double* col = &cols_[j * n_];
    const double a = coef[j];
    for (std::size_t i = 0; i < m; ++i) out[i] += a * col[i];
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double z = std::clamp(out[i], -kLogitClamp, kLogitClamp);
    out[i] = 1.0 / (1.0 + std::exp(z));
  }
}

std::vector<FeatureVector> FeatureScorer::normalized_features(
    std::span<const std::size_t> remaining) const {
  std::vector<FeatureVector> out;
  if (remaining.empty()) return out;
  const_cast<FeatureScorer*>(this)->diversity_columns(remaining);
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    FeatureVector f = fixed_[remaining[i]];
    for (std::size_t j = 0; j < kDiversityCount; ++j) f[j] = cols_[j * n_ + i];
    out.push_back(f);
  }
  normalize_columns(out, 0, kDiversityCount);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> select_batch(BatchScorer& scorer, const SelectionConfig& config,
                                      RngStream& rng) {
  const std::size_t n = scorer.size();
  const std::size_t target = config.batch;
  if (target == 0) fail(ErrorKind::config, "batch size must be at least 1");
  if (config.simulations == 0) fail(ErrorKind::config, "at least one simulation is required");
  if (n < target)
    fail(ErrorKind::contract, "select_batch: " + std::to_string(n) + " candidates for a batch of " +
                                  std::to_string(target));
  std::vector<std::size_t> selected;
  if (n == target) {
    selected.resize(n);
    std::iota(selected.begin(), selected.end(), 0);
    return selected;
  }

  std::vector<bool> in_selection(n, false);
  std::vector<std::size_t> base_remaining, remaining;
  std::vector<double> first_scores(n), scores(n);
  std::vector<std::size_t> counts(n);
  selected.reserve(target);

  while (selected.size() < target) {
    base_remaining.clear();
    for (std::size_t c = 0; c < n; ++c)
      if (!in_selection[c]) base_remaining.push_back(c);
    std::fill(counts.begin(), counts.end(), 0);

    // Every simulation starts from the same selection, so the first step's
    // scores are shared.
    scorer.begin(selected);
    scorer.score(base_remaining, first_scores);

    for (std::size_t sim = 0; sim < config.simulations; ++sim) {
      if (sim > 0) scorer.begin(selected);
      remaining = base_remaining;
      std::copy(first_scores.begin(), first_scores.begin() + static_cast<std::ptrdiff_t>(remaining.size()),
                scores.begin());
      for (std::size_t filled = selected.size(); filled < target; ++filled) {
        const std::size_t k = sample_next(remaining, scores, rng);
        ++counts[k];
        if (filled + 1 == target) break;
        const auto pos = std::find(remaining.begin(), remaining.end(), k);
        remaining.erase(pos);
        scorer.add(k);
        scorer.score(remaining, scores);
      }
    }

    const std::size_t top = *std::max_element(counts.begin(), counts.end());
    std::vector<std::size_t> ties;
    for (std::size_t c = 0; c < n; ++c)
      if (counts[c] == top && !in_selection[c]) ties.push_back(c);
    const std::size_t pick = ties.size() == 1 ? ties.front() : ties[rng.uniform_index(ties.size())];
    in_selection[pick] = true;
    selected.push_back(pick);
  }
  return selected;
}

std::vector<std::size_t> select_batch(const std::vector<Candidate>& pool, const FeatureContext& ctx,
                                      const WeightVector& w, const SelectionConfig& config,
                                      RngStream& rng) {
  FeatureScorer scorer(pool, ctx, w);
  return select_batch(scorer, config, rng);
}

}  // namespace fewshot
