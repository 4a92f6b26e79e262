#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fewshot/features.hpp"
#include "fewshot/generators.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

struct WeightVector {
  std::array<double, kFeatureCount> values{};
  bool operator==(const WeightVector&) const = default;
};

inline constexpr double kLogitClamp = 500.0;

/// 1 / (1 + exp(w.f)), with w.f clamped to +-500. Larger w.f gives a smaller score.
double logistic_score(std::span<const double> features, const WeightVector& w);

/// Draws one element of `remaining` with probability proportional to the
/// aligned `scores`, normalized over `remaining` only.
std::size_t sample_next(std::span<const std::size_t> remaining, std::span<const double> scores,
                        RngStream& rng);

/// Scores candidates relative to a batch under construction. select_batch
/// drives it with begin() at the start of every simulated completion and
/// add() after every sampled slot.
class BatchScorer {
 public:
  virtual ~BatchScorer() = default;
  virtual std::size_t size() const = 0;
  virtual void begin(std::span<const std::size_t> batch) = 0;
  virtual void add(std::size_t index) = 0;
  /// Writes a positive score for every index in `remaining`.
  virtual void score(std::span<const std::size_t> remaining, std::span<double> out) = 0;
};

/// Scores that ignore the batch entirely (frozen features).
class FixedScorer final : public BatchScorer {
 public:
  explicit FixedScorer(std::vector<double> scores) : scores_(std::move(scores)) {}
  std::size_t size() const override { return scores_.size(); }
  void begin(std::span<const std::size_t>) override {}
  void add(std::size_t) override {}
  void score(std::span<const std::size_t> remaining, std::span<double> out) override {
    for (std::size_t i = 0; i < remaining.size(); ++i) out[i] = scores_[remaining[i]];
  }

 private:
  std::vector<double> scores_;
};

/// Logistic scoring over the 29 features of a candidate pool.
///
/// Dynamic and static features are computed and normalized once, over the
/// whole pool. Diversity features are updated incrementally as the batch
/// grows and renormalized over the remaining candidates at every step.
class FeatureScorer final : public BatchScorer {
 public:
  FeatureScorer(const std::vector<Candidate>& pool, const FeatureContext& ctx, const WeightVector& w);

  std::size_t size() const override { return n_; }
  void begin(std::span<const std::size_t> batch) override;
  void add(std::size_t index) override;
  void score(std::span<const std::size_t> remaining, std::span<double> out) override;

  /// Full normalized feature vectors of `remaining` for the current batch.
  std::vector<FeatureVector> normalized_features(std::span<const std::size_t> remaining) const;

 private:
  // Raw diversity columns of `remaining` into cols_ (column-major, stride n).
  void diversity_columns(std::span<const std::size_t> remaining);

  WeightVector weights_;
  std::size_t n_ = 0;
  std::vector<std::uint8_t> generator_;
  std::array<std::vector<std::size_t>, kGeneratorCount> members_;
  std::vector<double> distance_;  // n x n, row-major
  std::array<std::vector<double>, 4> evaluated_;  // set (a) summaries per candidate
  std::vector<FeatureVector> fixed_;  // normalized dynamic + static columns
  std::vector<double> fixed_logit_;

  // Running statistics of the distances to the batch (b) and to same-generator
  // batch members (c). The batch count is shared; the same-generator count
  // depends only on the generator.
  std::size_t batch_count_ = 0;
  std::array<std::size_t, kGeneratorCount> same_count_{};
  std::vector<double> b_sum_, b_sumsq_, b_min_, b_max_;
  std::vector<double> s_sum_, s_sumsq_, s_min_, s_max_;
  std::vector<double> cols_;  // scratch, kDiversityCount x n
};

struct SelectionConfig {
  std::size_t batch = 8;
  std::size_t simulations = 100;
};

/// Monte-Carlo batch completion: each outer step runs `simulations`
/// completions of the current selection, counts how often each candidate is
/// sampled, and adds the most frequent one (ties uniformly at random).
std::vector<std::size_t> select_batch(BatchScorer& scorer, const SelectionConfig& config,
                                      RngStream& rng);

std::vector<std::size_t> select_batch(const std::vector<Candidate>& pool, const FeatureContext& ctx,
                                      const WeightVector& w, const SelectionConfig& config,
                                      RngStream& rng);

}  // namespace fewshot
