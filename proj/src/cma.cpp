#include "fewshot/cma.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fewshot {

namespace {
constexpr double kSigmaMin = 1e-12;
constexpr double kSigmaMax = 1.0;
}  // namespace

CmaState initial_cma_state(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  CmaState s;
  s.mean = Eigen::VectorXd::Constant(n, 0.5);
  s.sigma = 0.3;
  s.cov = Eigen::MatrixXd::Identity(n, n);
  s.path_sigma = Eigen::VectorXd::Zero(n);
  s.path_c = Eigen::VectorXd::Zero(n);
  s.basis = Eigen::MatrixXd::Identity(n, n);
  s.axis_lengths = Eigen::VectorXd::Ones(n);
  return s;
}

void refresh_eigensystem(CmaState& state) {
  // Enforce exact symmetry before decomposing.
  state.cov = 0.5 * (state.cov + state.cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(state.cov);
  Eigen::VectorXd eig = solver.eigenvalues();
  bool repaired = false;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (!(eig[i] > kCmaEigenFloor)) {
      eig[i] = kCmaEigenFloor;
      repaired = true;
    }
  }
  state.basis = solver.eigenvectors();
  state.axis_lengths = eig.cwiseSqrt();
  if (repaired) {
    state.cov = state.basis * eig.asDiagonal() * state.basis.transpose();
    state.cov = 0.5 * (state.cov + state.cov.transpose()).eval();
  }
}

CmaParameters cma_parameters(std::size_t dim, std::size_t lambda) {
  CmaParameters p;
  const double n = static_cast<double>(dim);
  p.lambda = lambda;
  p.mu = std::max<std::size_t>(1, lambda / 2);
  p.weights.resize(p.mu);
  for (std::size_t i = 0; i < p.mu; ++i)
    p.weights[i] = std::log(static_cast<double>(p.mu) + 0.5) - std::log(static_cast<double>(i + 1));
  const double wsum = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
  for (auto& w : p.weights) w /= wsum;
  double sq = 0.0;
  for (double w : p.weights) sq += w * w;
  p.mu_eff = 1.0 / sq;
  p.c_sigma = (p.mu_eff + 2.0) / (n + p.mu_eff + 5.0);
  p.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((p.mu_eff - 1.0) / (n + 1.0)) - 1.0) + p.c_sigma;
  p.c_c = (4.0 + p.mu_eff / n) / (n + 4.0 + 2.0 * p.mu_eff / n);
  p.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + p.mu_eff);
  p.c_mu = std::min(1.0 - p.c_1,
                    2.0 * (p.mu_eff - 2.0 + 1.0 / p.mu_eff) / ((n + 2.0) * (n + 2.0) + p.mu_eff));
  p.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  return p;
}

CmaState cma_update(const CmaState& state, const SearchSpace& space,
                    const std::vector<EvaluationRecord>& evaluated) {
  if (evaluated.size() < 2) fail(ErrorKind::contract, "cma_update needs at least 2 records");
  const std::size_t dim = state.dim();
  if (space.dim() != dim) fail(ErrorKind::contract, "cma_update: dimension mismatch");
  const auto p = cma_parameters(dim, evaluated.size());

  std::vector<std::size_t> rank(evaluated.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    return evaluated[a].value < evaluated[b].value;
  });

  // Tied values share the mean of their rank weights, so the update does not
  // depend on the order of equal points.
  std::vector<double> weight(evaluated.size(), 0.0);
  for (std::size_t i = 0; i < p.mu; ++i) weight[i] = p.weights[i];
  for (std::size_t lo = 0; lo < rank.size();) {
    std::size_t hi = lo + 1;
    while (hi < rank.size() && evaluated[rank[hi]].value == evaluated[rank[lo]].value) ++hi;
    if (hi - lo > 1) {
      double sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i) sum += weight[i];
      for (std::size_t i = lo; i < hi; ++i) weight[i] = sum / static_cast<double>(hi - lo);
    }
    lo = hi;
  }

  CmaState next = state;
  const auto n = static_cast<Eigen::Index>(dim);
  std::vector<Eigen::VectorXd> steps;
  std::vector<double> step_weight;
  Eigen::VectorXd y_w = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < rank.size(); ++i) {
    if (weight[i] == 0.0) continue;
    const auto u = normalize_point(evaluated[rank[i]].point, space);
    Eigen::VectorXd y = (Eigen::Map<const Eigen::VectorXd>(u.data(), n) - state.mean) / state.sigma;
    y_w += weight[i] * y;
    steps.push_back(std::move(y));
    step_weight.push_back(weight[i]);
  }
  next.mean = state.mean + state.sigma * y_w;

  const Eigen::MatrixXd inv_sqrt =
      state.basis * state.axis_lengths.cwiseInverse().asDiagonal() * state.basis.transpose();
  next.path_sigma = (1.0 - p.c_sigma) * state.path_sigma +
                    std::sqrt(p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff) * (inv_sqrt * y_w);

  const double gen = static_cast<double>(state.generation + 1);
  const double ps_norm = next.path_sigma.norm();
  const bool h_sigma = ps_norm / std::sqrt(1.0 - std::pow(1.0 - p.c_sigma, 2.0 * gen)) <
                       (1.4 + 2.0 / (static_cast<double>(dim) + 1.0)) * p.chi_n;
  next.path_c = (1.0 - p.c_c) * state.path_c;
  if (h_sigma) next.path_c += std::sqrt(p.c_c * (2.0 - p.c_c) * p.mu_eff) * y_w;

  const double delta_h = h_sigma ? 0.0 : p.c_c * (2.0 - p.c_c);
  Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < steps.size(); ++i) rank_mu += step_weight[i] * steps[i] * steps[i].transpose();
  next.cov = (1.0 + p.c_1 * delta_h - p.c_1 - p.c_mu) * state.cov +
             p.c_1 * next.path_c * next.path_c.transpose() + p.c_mu * rank_mu;

  next.sigma = state.sigma * std::exp((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0));
  next.sigma = std::clamp(next.sigma, kSigmaMin, kSigmaMax);
  next.generation = state.generation + 1;
  refresh_eigensystem(next);
  return next;
}

std::vector<double> cma_sample(const CmaState& state, std::span<const double> center,
                               RngStream& rng) {
  const auto n = static_cast<Eigen::Index>(state.dim());
  if (static_cast<Eigen::Index>(center.size()) != n)
    fail(ErrorKind::contract, "cma_sample: centre dimension mismatch");
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  const Eigen::VectorXd step = state.basis * state.axis_lengths.cwiseProduct(z);
  std::vector<double> x(center.begin(), center.end());
  for (Eigen::Index i = 0; i < n; ++i) x[i] += state.sigma * step[i];
  return x;
}

}  // namespace fewshot
