#include "fewshot/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace fewshot {

namespace {

// Column-major training sample: cols[j][i] is feature j of sample i.
struct Columns {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<std::vector<double>> cols;

  double at(std::size_t j, std::size_t i) const { return cols[j][i]; }
};

Columns bootstrap_columns(const std::vector<std::vector<double>>& x,
                          std::span<const std::size_t> rows) {
  Columns c;
  c.n = rows.size();
  c.d = x.front().size();
  c.cols.assign(c.d, std::vector<double>(c.n));
  for (std::size_t i = 0; i < c.n; ++i)
    for (std::size_t j = 0; j < c.d; ++j) c.cols[j][i] = x[rows[i]][j];
  return c;
}

std::vector<std::size_t> bootstrap_rows(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = rng.uniform_index(n);
  return rows;
}

double split_threshold(double lo, double hi) {
  const double mid = lo + 0.5 * (hi - lo);
  return mid < hi ? mid : lo;
}

// Level-wise least-squares tree growth over presorted features. Each level
// costs one pass over every presorted column.
struct TreeGrower {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t depth = 0;
  const Columns* x = nullptr;
  std::vector<std::vector<double>> sorted_x;          // per feature, ascending
  std::vector<std::vector<std::uint32_t>> sorted_row;  // matching sample index
  std::vector<double> inv;                             // inv[k] = 1 / k

  // Workspace, reused across trees.
  std::vector<int> slot;
  std::vector<double> sum, sumsq, best_score, best_thr, lsum, lastx;
  std::vector<std::size_t> cnt, lcnt;
  std::vector<int> best_feature;

  TreeGrower(const Columns& cols, std::size_t max_depth)
      : n(cols.n), d(cols.d), depth(max_depth), x(&cols) {
    sorted_x.resize(d);
    sorted_row.resize(d);
    std::vector<std::uint32_t> order(n);
    for (std::size_t j = 0; j < d; ++j) {
      std::iota(order.begin(), order.end(), 0u);
      const auto& col = cols.cols[j];
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
      sorted_row[j] = order;
      sorted_x[j].resize(n);
      for (std::size_t r = 0; r < n; ++r) sorted_x[j][r] = col[order[r]];
    }
    inv.resize(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) inv[k] = 1.0 / static_cast<double>(k);
    slot.resize(n);
    const std::size_t width = std::size_t{1} << std::min<std::size_t>(depth, 20);
    for (auto* v : {&sum, &sumsq, &best_score, &best_thr, &lsum, &lastx}) v->resize(width);
    cnt.resize(width);
    lcnt.resize(width);
    best_feature.resize(width);
  }

  RegressionTree grow(std::span<const double> residual, std::vector<int>& node_of) {
    RegressionTree tree;
    tree.nodes.emplace_back();
    std::fill(node_of.begin(), node_of.end(), 0);
    std::vector<int> level = {0}, next;

    for (std::size_t lvl = 0; lvl < depth && !level.empty(); ++lvl) {
      const std::size_t m = level.size();
      std::vector<int> slot_of(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < m; ++s) slot_of[level[s]] = static_cast<int>(s);
      for (std::size_t i = 0; i < n; ++i) slot[i] = slot_of[node_of[i]];

      std::fill_n(sum.begin(), m, 0.0);
      std::fill_n(sumsq.begin(), m, 0.0);
      std::fill_n(cnt.begin(), m, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const int s = slot[i];
        if (s < 0) continue;
        sum[s] += residual[i];
        sumsq[s] += residual[i] * residual[i];
        ++cnt[s];
      }
      // A split must beat the unsplit node's sum^2/n by a relative margin.
      for (std::size_t s = 0; s < m; ++s) {
        best_score[s] = cnt[s] ? sum[s] * sum[s] * inv[cnt[s]] + 1e-12 * sumsq[s] : 0.0;
        best_feature[s] = -1;
        best_thr[s] = 0.0;
      }

      double* const p_lsum = lsum.data();
      double* const p_lastx = lastx.data();
      std::size_t* const p_lcnt = lcnt.data();
      const double* const p_sum = sum.data();
      const std::size_t* const p_cnt = cnt.data();
      const double* const p_inv = inv.data();
      const int* const p_slot = slot.data();
      const double* const p_res = residual.data();
      for (std::size_t j = 0; j < d; ++j) {
        std::fill_n(p_lsum, m, 0.0);
        std::fill_n(p_lcnt, m, 0);
        const double* sx = sorted_x[j].data();
        const std::uint32_t* sr = sorted_row[j].data();
        for (std::size_t r = 0; r < n; ++r) {
          const std::uint32_t idx = sr[r];
          const int s = p_slot[idx];
          if (s < 0) continue;
          const double xv = sx[r];
          const std::size_t nl = p_lcnt[s];
          const double ls = p_lsum[s];
          if (nl > 0 && xv > p_lastx[s]) {
            const double right = p_sum[s] - ls;
            const double score = ls * ls * p_inv[nl] + right * right * p_inv[p_cnt[s] - nl];
            if (score > best_score[s]) {
              best_score[s] = score;
              best_feature[s] = static_cast<int>(j);
              best_thr[s] = split_threshold(p_lastx[s], xv);
            }
          }
          p_lsum[s] = ls + p_res[idx];
          p_lcnt[s] = nl + 1;
          p_lastx[s] = xv;
        }
      }

      next.clear();
      for (std::size_t s = 0; s < m; ++s) {
        if (best_feature[s] < 0) continue;
        const int id = level[s];
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        tree.nodes[id].feature = best_feature[s];
        tree.nodes[id].threshold = best_thr[s];
        tree.nodes[id].left = left;
        tree.nodes[id].right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto& node = tree.nodes[node_of[i]];
        if (node.feature < 0) continue;
        node_of[i] = x->at(static_cast<std::size_t>(node.feature), i) <= node.threshold ? node.left
                                                                                        : node.right;
      }
      std::swap(level, next);
    }

    std::vector<double> leaf_sum(tree.nodes.size(), 0.0);
    std::vector<std::size_t> leaf_cnt(tree.nodes.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_sum[node_of[i]] += residual[i];
      ++leaf_cnt[node_of[i]];
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k)
      if (tree.nodes[k].feature < 0 && leaf_cnt[k] > 0)
        tree.nodes[k].value = leaf_sum[k] / static_cast<double>(leaf_cnt[k]);
    return tree;
  }
};

double mean_squared(std::span<const double> r) {
  double acc = 0.0;
  for (double v : r) acc += v * v;
  return acc / static_cast<double>(r.size());
}

GbmReplica fit_replica(const std::vector<std::vector<double>>& x, std::span<const double> y,
                       const GbmConfig& config, RngStream& rng) {
  const auto rows = bootstrap_rows(x.size(), rng);
  const Columns cols = bootstrap_columns(x, rows);
  std::vector<double> target(cols.n);
  for (std::size_t i = 0; i < cols.n; ++i) target[i] = y[rows[i]];

  GbmReplica replica;
  replica.shrinkage = config.shrinkage;
  replica.base = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(cols.n);
  std::vector<double> residual(cols.n);
  for (std::size_t i = 0; i < cols.n; ++i) residual[i] = target[i] - replica.base;
  replica.stage_mse.push_back(mean_squared(residual));

  TreeGrower grower(cols, config.depth);
  std::vector<int> node_of(cols.n);
  replica.trees.reserve(config.trees);
  for (std::size_t t = 0; t < config.trees; ++t) {
    RegressionTree tree = grower.grow(residual, node_of);
    for (std::size_t i = 0; i < cols.n; ++i)
      residual[i] -= config.shrinkage * tree.nodes[node_of[i]].value;
    replica.stage_mse.push_back(mean_squared(residual));
    replica.trees.push_back(std::move(tree));
  }
  return replica;
}

std::vector<std::vector<double>> unit_rows(const std::vector<EvaluationRecord>& history,
                                           const SearchSpace& space, std::vector<double>& y) {
  std::vector<std::vector<double>> x;
  x.reserve(history.size());
  y.clear();
  for (const auto& r : history) {
    x.push_back(normalize_point(r.point, space));
    y.push_back(r.value);
  }
  return x;
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double GbmReplica::predict(std::span<const double> x) const {
  double acc = 0.0;
  for (const auto& t : trees) acc += t.predict(x);
  return base + shrinkage * acc;
}

GbmEnsemble::GbmEnsemble(std::vector<GbmReplica> replicas, std::size_t trained_on)
    : replicas_(std::move(replicas)), trained_on_(trained_on) {
  flatten();
}

namespace {

std::size_t tree_depth(const RegressionTree& t, int node = 0) {
  const auto& n = t.nodes[node];
  if (n.feature < 0) return 0;
  return 1 + std::max(tree_depth(t, n.left), tree_depth(t, n.right));
}

}  // namespace

void GbmEnsemble::flatten() {
  constexpr std::size_t kMaxFlatDepth = 10;
  flat_ = {};
  if (replicas_.empty()) return;
  const std::size_t per = replicas_.front().trees.size();
  std::size_t depth = 0;
  for (const auto& r : replicas_) {
    if (r.trees.size() != per) return;
    for (const auto& t : r.trees) depth = std::max(depth, tree_depth(t));
  }
  if (depth > kMaxFlatDepth) return;
  const std::size_t inner = (std::size_t{1} << depth) - 1, leaves = std::size_t{1} << depth;
  const std::size_t total = replicas_.size() * per;
  flat_.depth = depth;
  flat_.trees_per_replica = per;
  flat_.feature.assign(total * inner, 0);
  flat_.threshold.assign(total * inner, std::numeric_limits<double>::infinity());
  flat_.leaf.assign(total * leaves, 0.0);
  std::size_t t_index = 0;
  for (const auto& r : replicas_)
    for (const auto& t : r.trees) {
      int* feat = &flat_.feature[t_index * inner];
      double* thr = &flat_.threshold[t_index * inner];
      double* leaf = &flat_.leaf[t_index * leaves];
      // (node in the original tree, slot in the complete layout, level)
      struct Item { int node; std::size_t slot; std::size_t level; };
      std::vector<Item> stack = {{0, 0, 0}};
      while (!stack.empty()) {
        const Item it = stack.back();
        stack.pop_back();
        const auto& n = t.nodes[it.node];
        if (it.level == depth) {
          leaf[it.slot - inner] = n.value;
        } else if (n.feature >= 0) {
          feat[it.slot] = n.feature;
          thr[it.slot] = n.threshold;
          stack.push_back({n.left, 2 * it.slot + 1, it.level + 1});
          stack.push_back({n.right, 2 * it.slot + 2, it.level + 1});
        } else {
          // Always go left; the leaf value lands in the leftmost descendant.
          stack.push_back({it.node, 2 * it.slot + 1, it.level + 1});
        }
      }
      ++t_index;
    }
}

double GbmEnsemble::flat_predict(std::size_t replica, std::span<const double> x) const {
  const std::size_t depth = flat_.depth, per = flat_.trees_per_replica;
  const std::size_t inner = (std::size_t{1} << depth) - 1, leaves = std::size_t{1} << depth;
  const int* feat = flat_.feature.data() + replica * per * inner;
  const double* thr = flat_.threshold.data() + replica * per * inner;
  const double* leaf = flat_.leaf.data() + replica * per * leaves;
  double acc = 0.0;
  for (std::size_t t = 0; t < per; ++t) {
    std::size_t slot = 0;
    for (std::size_t l = 0; l < depth; ++l)
      slot = 2 * slot + 1 + static_cast<std::size_t>(x[feat[slot]] > thr[slot]);
    acc += leaf[slot - inner];
    feat += inner;
    thr += inner;
    leaf += leaves;
  }
  return replicas_[replica].base + replicas_[replica].shrinkage * acc;
}

GbmPrediction GbmEnsemble::predict(std::span<const double> unit) const {
  if (!trained()) fail(ErrorKind::contract, "predict on an untrained GBM ensemble");
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (std::size_t m = 0; m < replicas_.size(); ++m) {
    const double v = flat_.trees_per_replica ? flat_predict(m, unit) : replicas_[m].predict(unit);
    ++k;
    const double delta = v - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (v - mean);
  }
  return {mean, std::sqrt(std::max(0.0, m2 / static_cast<double>(k)))};
}

void GbmEnsemble::predict_replicas(std::span<const double> unit, std::span<double> out) const {
  if (!trained()) fail(ErrorKind::contract, "predict on an untrained GBM ensemble");
  if (out.size() != replicas_.size()) fail(ErrorKind::contract, "replica output size mismatch");
  for (std::size_t m = 0; m < replicas_.size(); ++m)
    out[m] = flat_.trees_per_replica ? flat_predict(m, unit) : replicas_[m].predict(unit);
}

GbmEnsemble fit_gbm_unit(const std::vector<std::vector<double>>& x, std::span<const double> y,
                         const GbmConfig& config, RngStream& rng) {
  if (x.size() != y.size()) fail(ErrorKind::contract, "fit_gbm: x/y size mismatch");
  if (config.replicas < 2) fail(ErrorKind::config, "GBM ensemble needs at least 2 replicas");
  if (x.empty()) return {};
  const std::size_t minimum = std::max<std::size_t>(2, config.min_records_per_dim * x.front().size());
  if (x.size() < minimum) return {};
  std::vector<GbmReplica> replicas;
  replicas.reserve(config.replicas);
  for (std::size_t m = 0; m < config.replicas; ++m) {
    RngStream sub = rng.substream("replica/" + std::to_string(m));
    replicas.push_back(fit_replica(x, y, config, sub));
  }
  return GbmEnsemble(std::move(replicas), x.size());
}

GbmEnsemble fit_gbm(const std::vector<EvaluationRecord>& history, const SearchSpace& space,
                    const GbmConfig& config, RngStream& rng) {
  std::vector<double> y;
  const auto x = unit_rows(history, space, y);
  return fit_gbm_unit(x, y, config, rng);
}

GbmPrediction predict_gbm(const GbmEnsemble& model, const Point& p, const SearchSpace& space) {
  return model.predict(normalize_point(p, space));
}

ImprovementProbability prob_improvement(const GbmPrediction& pred,
                                        std::span<const double> replica_values, double fmin) {
  auto pi_for = [&](double mean) {
    if (pred.sigma > 0.0) return std_normal_cdf((fmin - mean) / pred.sigma);
    return mean < fmin ? 1.0 : 0.0;
  };
  ImprovementProbability out;
  out.pi = pi_for(pred.mu);
  if (!replica_values.empty()) {
    double mean = 0.0;
    for (double v : replica_values) mean += pi_for(v);
    mean /= static_cast<double>(replica_values.size());
    double var = 0.0;
    for (double v : replica_values) {
      const double dv = pi_for(v) - mean;
      var += dv * dv;
    }
    out.uncertainty = std::sqrt(var / static_cast<double>(replica_values.size()));
  }
  return out;
}

ImprovementProbability prob_improvement(const GbmEnsemble& model, std::span<const double> unit,
                                        double fmin) {
  std::vector<double> reps(model.replica_count());
  model.predict_replicas(unit, reps);
  double mean = 0.0;
  for (double v : reps) mean += v;
  mean /= static_cast<double>(reps.size());
  double var = 0.0;
  for (double v : reps) var += (v - mean) * (v - mean);
  const GbmPrediction pred{mean, std::sqrt(var / static_cast<double>(reps.size()))};
  return prob_improvement(pred, reps, fmin);
}

// ---------------------------------------------------------------------------
// Interest forest

std::vector<bool> interest_labels(std::span<const double> values, double quantile) {
  if (values.empty()) return {};
  if (!(quantile > 0.0 && quantile < 1.0)) fail(ErrorKind::config, "quantile must lie in (0, 1)");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = std::ceil(quantile * static_cast<double>(sorted.size()) - 1e-9);
  const auto k = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(sorted.size())));
  const double threshold = sorted[k - 1];
  std::vector<bool> good(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) good[i] = values[i] <= threshold;
  return good;
}

namespace {

struct ForestGrower {
  const std::vector<std::vector<double>>& x;
  const std::vector<bool>& good;
  const ForestConfig& config;
  std::size_t mtry;
  RngStream& rng;
  ClassificationTree tree;

  static double gini_weighted(double n, double g) {
    if (n <= 0.0) return 0.0;
    const double p = g / n;
    return n * 2.0 * p * (1.0 - p);
  }

  int build(std::vector<std::size_t>& idx) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const std::size_t n = idx.size();
    std::size_t g = 0;
    for (auto i : idx) g += good[i] ? 1 : 0;
    tree.nodes[id].good = 2 * g >= n;
    if (g == 0 || g == n || n < 2 * config.min_leaf) return id;

    const std::size_t d = x.front().size();
    std::vector<std::size_t> features(d);
    std::iota(features.begin(), features.end(), 0);
    shuffle(features, rng);

    int best_feature = -1;
    double best_cost = 0.0, best_thr = 0.0;
    // Split costs only depend on the order of distinct values, so any sort by
    // value gives the same splits.
    std::vector<std::pair<double, std::size_t>> sorted(n);
    for (std::size_t fi = 0; fi < d; ++fi) {
      if (fi >= mtry && best_feature >= 0) break;
      const std::size_t j = features[fi];
      for (std::size_t p = 0; p < n; ++p) sorted[p] = {x[idx[p]][j], idx[p]};
      std::sort(sorted.begin(), sorted.end());
      std::size_t left_good = 0;
      for (std::size_t p = 1; p < n; ++p) {
        left_good += good[sorted[p - 1].second] ? 1 : 0;
        if (p < config.min_leaf || n - p < config.min_leaf) continue;
        const double lo = sorted[p - 1].first, hi = sorted[p].first;
        if (!(hi > lo)) continue;
        const double cost = gini_weighted(static_cast<double>(p), static_cast<double>(left_good)) +
                            gini_weighted(static_cast<double>(n - p),
                                          static_cast<double>(g - left_good));
        if (best_feature < 0 || cost < best_cost) {
          best_feature = static_cast<int>(j);
          best_cost = cost;
          best_thr = split_threshold(lo, hi);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) (x[i][best_feature] <= best_thr ? left : right).push_back(i);
    tree.nodes[id].feature = best_feature;
    tree.nodes[id].threshold = best_thr;
    const int l = build(left);
    tree.nodes[id].left = l;
    const int r = build(right);
    tree.nodes[id].right = r;
    return id;
  }
};

}  // namespace

InterestForest::InterestForest(std::vector<ClassificationTree> trees, double quantile)
    : trees_(std::move(trees)), quantile_(quantile) {}

double InterestForest::score(std::span<const double> unit) const {
  if (!trained()) fail(ErrorKind::contract, "score on an untrained interest forest");
  std::size_t votes = 0;
  for (const auto& t : trees_) votes += t.vote(unit) ? 1 : 0;
  return static_cast<double>(votes) / static_cast<double>(trees_.size());
}

InterestForest fit_interest_forest_unit(const std::vector<std::vector<double>>& x,
                                        std::span<const double> y, const ForestConfig& config,
                                        RngStream& rng) {
  if (x.size() != y.size()) fail(ErrorKind::contract, "fit_interest_forest: x/y size mismatch");
  if (config.trees < 10) fail(ErrorKind::config, "interest forest needs at least 10 trees");
  if (x.size() < std::max<std::size_t>(1, config.min_records)) return {};
  const auto labels = interest_labels(y, config.quantile);
  const std::size_t d = x.front().size();
  const std::size_t mtry =
      config.max_features > 0
          ? std::min(config.max_features, d)
          : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));

  std::vector<ClassificationTree> trees;
  trees.reserve(config.trees);
  for (std::size_t t = 0; t < config.trees; ++t) {
    RngStream sub = rng.substream("tree/" + std::to_string(t));
    auto rows = bootstrap_rows(x.size(), sub);
    ForestGrower grower{x, labels, config, mtry, sub, {}};
    grower.build(rows);
    trees.push_back(std::move(grower.tree));
  }
  return InterestForest(std::move(trees), config.quantile);
}

InterestForest fit_interest_forest(const std::vector<EvaluationRecord>& history,
                                   const SearchSpace& space, const ForestConfig& config,
                                   RngStream& rng) {
  std::vector<double> y;
  const auto x = unit_rows(history, space, y);
  return fit_interest_forest_unit(x, y, config, rng);
}

double interest_score(const InterestModel& model, const Point& p, const SearchSpace& space) {
  return model.score(normalize_point(p, space));
}

}  // namespace fewshot
