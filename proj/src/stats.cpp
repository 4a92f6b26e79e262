#include "fewshot/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fewshot/core.hpp"

namespace fewshot {

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(values[i]) < std::abs(values[j]);
  });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(values[order[j + 1]]) == std::abs(values[order[i]])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative) {
  if (a.size() != b.size()) fail(ErrorKind::contract, "wilcoxon: samples must be paired");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (!std::isfinite(diff)) fail(ErrorKind::contract, "wilcoxon: non-finite sample");
    if (diff != 0.0) d.push_back(diff);
  }
  WilcoxonResult out;
  out.n = d.size();
  out.small_sample = out.n < 6;
  if (d.empty()) {
    out.all_zero = true;
    out.p_value = 1.0;
    return out;
  }
  const auto ranks = midranks(d);
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? out.w_plus : out.w_minus) += ranks[i];

  double p_upper = 1.0, p_lower = 1.0;  // P(W+ >= obs), P(W+ <= obs)
  const std::size_t n = d.size();
  if (n <= kWilcoxonExactLimit) {
    out.exact = true;
    // Midranks are multiples of 1/2, so doubled ranks are integers.
    std::vector<std::size_t> doubled(n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t r : doubled)
      for (std::size_t s = total; s >= r; --s) {
        count[s] += count[s - r];
        if (s == r) break;
      }
    const auto obs = static_cast<std::size_t>(std::lround(2.0 * out.w_plus));
    double upper = 0.0, lower = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s >= obs) upper += count[s];
      if (s <= obs) lower += count[s];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    p_upper = upper / all;
    p_lower = lower / all;
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double tie = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie += t * t * t - t;
      i = j;
    }
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie / 48.0;
    const double sd = std::sqrt(var);
    const double z_upper = (out.w_plus - mu - 0.5) / sd;
    const double z_lower = (out.w_plus - mu + 0.5) / sd;
    p_upper = 0.5 * std::erfc(z_upper / std::sqrt(2.0));
    p_lower = 0.5 * std::erfc(-z_lower / std::sqrt(2.0));
  }
  switch (alternative) {
    case Alternative::greater: out.p_value = p_upper; break;
    case Alternative::less: out.p_value = p_lower; break;
    case Alternative::two_sided: out.p_value = std::min(1.0, 2.0 * std::min(p_upper, p_lower)); break;
  }
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace fewshot
