#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fewshot {

enum class Alternative {
  two_sided,
  greater,  // A tends to exceed B
  less,     // A tends to fall below B
};

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;  // sum of ranks of positive differences A - B
  double w_minus = 0.0;
  std::size_t n = 0;  // pairs with a nonzero difference
  bool exact = false;
  bool all_zero = false;      // p forced to 1
  bool small_sample = false;  // fewer than 6 nonzero differences
};

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Paired Wilcoxon signed-rank test on A - B. Zero differences are dropped
/// and ties get midranks. For n <= 25 the null distribution is enumerated
/// exactly; above that the normal approximation with continuity and tie
/// corrections is used. Two-sided p is twice the smaller tail, capped at 1.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative = Alternative::two_sided);

/// Midranks of |values| (1-based), in input order.
std::vector<double> midranks(std::span<const double> values);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_std(std::span<const double> values);

}  // namespace fewshot
