#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fewshot/core.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

// Both surrogates work on unit-cube coordinates (see normalize_point).

struct GbmConfig {
  std::size_t replicas = 5;  // bootstrap replicas; their spread is sigma
  std::size_t trees = 100;
  std::size_t depth = 3;
  double shrinkage = 0.1;
  std::size_t min_records_per_dim = 2;
};

/// Depth-limited least-squares regression tree.
struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(std::span<const double> x) const {
    int n = 0;
    while (nodes[n].feature >= 0)
      n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
    return nodes[n].value;
  }
};

struct GbmReplica {
  double base = 0.0;
  double shrinkage = 0.1;
  std::vector<RegressionTree> trees;
  /// Training MSE on the replica's bootstrap sample after 0, 1, ..., T stages.
  std::vector<double> stage_mse;

  double predict(std::span<const double> x) const;
};

struct GbmPrediction {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Bagged gradient-boosted trees. A default-constructed ensemble is the
/// untrained marker; predicting from it is a contract violation.
class GbmEnsemble {
 public:
  GbmEnsemble() = default;
  GbmEnsemble(std::vector<GbmReplica> replicas, std::size_t trained_on);

  bool trained() const { return !replicas_.empty(); }
  std::size_t trained_on() const { return trained_on_; }
  std::size_t replica_count() const { return replicas_.size(); }
  const std::vector<GbmReplica>& replicas() const { return replicas_; }

  /// mu = mean over replicas, sigma = population standard deviation.
  GbmPrediction predict(std::span<const double> unit) const;
  void predict_replicas(std::span<const double> unit, std::span<double> out) const;

 private:
  // Trees re-laid out as complete binary trees of a common depth, so that
  // prediction is a fixed number of branch-free steps per tree. Shallow
  // leaves are padded with always-left splits. Empty when too deep.
  struct FlatTrees {
    std::size_t depth = 0;
    std::size_t trees_per_replica = 0;
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<double> leaf;
  };
  void flatten();
  double flat_predict(std::size_t replica, std::span<const double> x) const;

  std::vector<GbmReplica> replicas_;
  std::size_t trained_on_ = 0;
  FlatTrees flat_;
};

/// Returns the untrained marker when there are fewer than
/// max(2, min_records_per_dim * dim) records.
GbmEnsemble fit_gbm(const std::vector<EvaluationRecord>& history, const SearchSpace& space,
                    const GbmConfig& config, RngStream& rng);
GbmEnsemble fit_gbm_unit(const std::vector<std::vector<double>>& x, std::span<const double> y,
                         const GbmConfig& config, RngStream& rng);

GbmPrediction predict_gbm(const GbmEnsemble& model, const Point& p, const SearchSpace& space);

inline double lcb(const GbmPrediction& pred, double kappa) { return pred.mu - kappa * pred.sigma; }

struct ImprovementProbability {
  double pi = 0.0;
  double uncertainty = 0.0;
};

/// Gaussian probability of improving on fmin. The uncertainty is the standard
/// deviation of the per-replica probabilities, each using that replica's
/// prediction as the mean and the ensemble sigma as the spread.
ImprovementProbability prob_improvement(const GbmPrediction& pred,
                                        std::span<const double> replica_values, double fmin);
ImprovementProbability prob_improvement(const GbmEnsemble& model, std::span<const double> unit,
                                        double fmin);

/// Anything that rates how promising a unit-cube location is, on [0, 1].
class InterestModel {
 public:
  virtual ~InterestModel() = default;
  virtual bool trained() const = 0;
  virtual double score(std::span<const double> unit) const = 0;
};

struct ForestConfig {
  std::size_t trees = 50;
  double quantile = 0.3;
  std::size_t min_leaf = 2;
  std::size_t max_features = 0;  // 0: ceil(sqrt(dim))
  std::size_t min_records = 5;
};

/// Good/bad classification tree, grown until pure or too small to split.
struct ClassificationTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    bool good = false;
  };
  std::vector<Node> nodes;

  bool vote(std::span<const double> x) const {
    int n = 0;
    while (nodes[n].feature >= 0)
      n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
    return nodes[n].good;
  }
};

/// Random forest that labels the best `quantile` of the history as good and
/// scores a location by the fraction of trees voting good.
class InterestForest final : public InterestModel {
 public:
  InterestForest() = default;
  InterestForest(std::vector<ClassificationTree> trees, double quantile);

  bool trained() const override { return !trees_.empty(); }
  double score(std::span<const double> unit) const override;
  double quantile() const { return quantile_; }
  const std::vector<ClassificationTree>& trees() const { return trees_; }

 private:
  std::vector<ClassificationTree> trees_;
  double quantile_ = 0.3;
};

/// good[i] = values[i] <= the ceil(q*n)-th smallest value.
std::vector<bool> interest_labels(std::span<const double> values, double quantile);

InterestForest fit_interest_forest(const std::vector<EvaluationRecord>& history,
                                   const SearchSpace& space, const ForestConfig& config,
                                   RngStream& rng);
InterestForest fit_interest_forest_unit(const std::vector<std::vector<double>>& x,
                                        std::span<const double> y, const ForestConfig& config,
                                        RngStream& rng);

double interest_score(const InterestModel& model, const Point& p, const SearchSpace& space);

}  // namespace fewshot
