#pragma once

#include <Eigen/Dense>

#include <vector>

#include "fewshot/core.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

/// CMA-ES distribution state in unit-cube coordinates.
struct CmaState {
  Eigen::VectorXd mean;
  double sigma = 0.3;
  Eigen::MatrixXd cov;
  Eigen::VectorXd path_sigma;
  Eigen::VectorXd path_c;
  int generation = 0;

  // Cached eigendecomposition cov = B diag(D^2) B^T.
  Eigen::MatrixXd basis;
  Eigen::VectorXd axis_lengths;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

inline constexpr double kCmaEigenFloor = 1e-14;

/// Mean at the domain centre, sigma = 0.3 of the (unit) width, C = I.
CmaState initial_cma_state(std::size_t dim);

/// Recomputes the eigen cache; eigenvalues below kCmaEigenFloor are floored
/// and the covariance is rebuilt from the repaired decomposition.
void refresh_eigensystem(CmaState& state);

/// Standard CMA-ES strategy constants for a population of `lambda`.
struct CmaParameters {
  std::size_t lambda = 0;
  std::size_t mu = 0;
  std::vector<double> weights;
  double mu_eff = 0.0;
  double c_sigma = 0.0;
  double d_sigma = 0.0;
  double c_c = 0.0;
  double c_1 = 0.0;
  double c_mu = 0.0;
  double chi_n = 0.0;
};

CmaParameters cma_parameters(std::size_t dim, std::size_t lambda);

/// One rank-one + rank-mu update. The population is every point evaluated in
/// the epoch, whoever proposed it, ranked by value.
CmaState cma_update(const CmaState& state, const SearchSpace& space,
                    const std::vector<EvaluationRecord>& evaluated);

/// Draws N(center, sigma^2 C) in unit coordinates (not clamped).
std::vector<double> cma_sample(const CmaState& state, std::span<const double> center,
                               RngStream& rng);

}  // namespace fewshot
