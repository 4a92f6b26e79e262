#include "fewshot/core.hpp"

#include <algorithm>
#include <cmath>

namespace fewshot {

SearchSpace::SearchSpace(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.empty()) fail(ErrorKind::config, "search space must have at least one dimension");
  if (lower_.size() != upper_.size())
    fail(ErrorKind::config, "search space bound vectors differ in length");
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
      fail(ErrorKind::config,
           "search space dimension " + std::to_string(i) + " needs finite lower < upper");
  }
}

SearchSpace SearchSpace::cube(std::size_t dim, double lo, double hi) {
  return SearchSpace(std::vector<double>(dim, lo), std::vector<double>(dim, hi));
}

std::vector<double> normalize_point(const Point& p, const SearchSpace& space) {
  if (p.coords.size() != space.dim()) fail(ErrorKind::contract, "point/space dimension mismatch");
  std::vector<double> unit(space.dim());
  for (std::size_t i = 0; i < unit.size(); ++i)
    unit[i] = (p.coords[i] - space.lower()[i]) / space.width(i);
  return unit;
}

Point denormalize_point(std::span<const double> unit, const SearchSpace& space) {
  if (unit.size() != space.dim()) fail(ErrorKind::contract, "unit vector/space dimension mismatch");
  Point p;
  p.coords.resize(unit.size());
  for (std::size_t i = 0; i < unit.size(); ++i) {
    if (!std::isfinite(unit[i])) fail(ErrorKind::contract, "non-finite unit coordinate");
    const double u = std::clamp(unit[i], 0.0, 1.0);
    // Hit the bounds exactly at 0 and 1.
    p.coords[i] = u == 1.0 ? space.upper()[i] : space.lower()[i] + u * space.width(i);
  }
  return p;
}

Point clamp_to_space(std::span<const double> raw, const SearchSpace& space) {
  if (raw.size() != space.dim()) fail(ErrorKind::contract, "point/space dimension mismatch");
  Point p;
  p.coords.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i]))
      fail(ErrorKind::contract, "non-finite coordinate " + std::to_string(i) + " rejected");
    p.coords[i] = std::clamp(raw[i], space.lower()[i], space.upper()[i]);
  }
  return p;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::contract, "euclidean_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

namespace {
constexpr std::array<std::string_view, kGeneratorCount> kGeneratorNames = {
    "LHS", "GBM-LCB", "GGA++", "CMA", "CMA-N", "TUR", "REP", "RER"};
}

std::string_view generator_name(GeneratorId g) { return kGeneratorNames[index_of(g)]; }

std::optional<GeneratorId> parse_generator(std::string_view name) {
  for (std::size_t i = 0; i < kGeneratorCount; ++i)
    if (kGeneratorNames[i] == name) return kAllGenerators[i];
  return std::nullopt;
}

}  // namespace fewshot
