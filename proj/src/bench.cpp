#include "fewshot/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "fewshot/rng.hpp"

namespace fewshot {

namespace {

constexpr std::array<std::string_view, 8> kFamilyNames = {
    "sphere", "rotated-ellipsoid", "rastrigin", "rosenbrock",
    "ackley", "schwefel",          "griewank",  "different-powers"};

bool supported_dim(int dim) {
  return std::find(kSuiteDims.begin(), kSuiteDims.end(), dim) != kSuiteDims.end();
}

double exponent_ramp(std::size_t i, std::size_t d) {
  return d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
}

}  // namespace

std::string_view family_name(Family f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

std::optional<Family> parse_family(std::string_view name) {
  for (std::size_t i = 0; i < kFamilyNames.size(); ++i)
    if (kFamilyNames[i] == name) return kAllFamilies[i];
  return std::nullopt;
}

std::string ObjectiveSpec::id() const {
  return std::string(family_name(family)) + "-d" + std::to_string(dim) + "-i" +
         std::to_string(instance);
}

ObjectiveSpec parse_objective_id(std::string_view id) {
  const auto bad = [&] { fail(ErrorKind::config, "malformed objective id '" + std::string(id) + "'"); };
  const auto ipos = id.rfind("-i");
  if (ipos == std::string_view::npos) bad();
  const auto dpos = id.rfind("-d", ipos);
  if (dpos == std::string_view::npos || dpos == 0) bad();
  const auto family = parse_family(id.substr(0, dpos));
  if (!family) fail(ErrorKind::config, "unknown objective family in '" + std::string(id) + "'");
  auto parse_int = [&](std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) bad();
    return v;
  };
  ObjectiveSpec spec;
  spec.family = *family;
  spec.dim = parse_int(id.substr(dpos + 2, ipos - dpos - 2));
  spec.instance = parse_int(id.substr(ipos + 2));
  if (!supported_dim(spec.dim))
    fail(ErrorKind::config, "unsupported dimension " + std::to_string(spec.dim));
  if (spec.instance < 0) bad();
  return spec;
}

InstanceTransform identity_transform(int dim) {
  InstanceTransform t;
  t.rotation = Eigen::MatrixXd::Identity(dim, dim);
  t.x_shift = Eigen::VectorXd::Zero(dim);
  t.f_shift = 0.0;
  return t;
}

InstanceTransform make_transform(const ObjectiveSpec& spec) {
  if (!supported_dim(spec.dim))
    fail(ErrorKind::config, "unsupported dimension " + std::to_string(spec.dim));
  if (spec.instance == 0) return identity_transform(spec.dim);

  RngStream rng(static_cast<std::uint64_t>(spec.instance), "objective/" + spec.id());
  const int d = spec.dim;

  // Modified Gram-Schmidt on a Gaussian matrix.
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < j; ++k) m.col(j) -= m.col(k).dot(m.col(j)) * m.col(k);
    m.col(j).normalize();
  }
  // Second pass removes the residual loss of orthogonality.
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < j; ++k) m.col(j) -= m.col(k).dot(m.col(j)) * m.col(k);
    m.col(j).normalize();
  }

  InstanceTransform t;
  t.rotation = m.transpose();
  t.x_shift.resize(d);
  if (spec.family == Family::rosenbrock) {
    // Rosenbrock's minimum sits at z = 1, i.e. x = shift + R^T 1. Constrain the
    // shift so that this point also stays in [-4, 4].
    const Eigen::VectorXd offset = t.rotation.transpose() * Eigen::VectorXd::Ones(d);
    for (int i = 0; i < d; ++i) {
      const double lo = std::max(-4.0, -4.0 - offset[i]);
      const double hi = std::min(4.0, 4.0 - offset[i]);
      t.x_shift[i] = rng.uniform(lo, hi);
    }
  } else {
    for (int i = 0; i < d; ++i) t.x_shift[i] = rng.uniform(-4.0, 4.0);
  }
  t.f_shift = std::round(rng.uniform(-100.0, 100.0) * 100.0) / 100.0;
  return t;
}

double base_function(Family family, const Eigen::VectorXd& z) {
  const auto d = static_cast<std::size_t>(z.size());
  const double two_pi = 2.0 * std::numbers::pi;
  double acc = 0.0;
  switch (family) {
    case Family::sphere:
      return z.squaredNorm();
    case Family::rotated_ellipsoid:
      for (std::size_t i = 0; i < d; ++i) acc += std::pow(1e6, exponent_ramp(i, d)) * z[i] * z[i];
      return acc;
    case Family::rastrigin:
      acc = 10.0 * static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i) acc += z[i] * z[i] - 10.0 * std::cos(two_pi * z[i]);
      return acc;
    case Family::rosenbrock:
      for (std::size_t i = 0; i + 1 < d; ++i) {
        const double a = z[i + 1] - z[i] * z[i];
        const double b = z[i] - 1.0;
        acc += 100.0 * a * a + b * b;
      }
      return acc;
    case Family::ackley: {
      double cos_sum = 0.0;
      for (std::size_t i = 0; i < d; ++i) cos_sum += std::cos(two_pi * z[i]);
      const double n = static_cast<double>(d);
      return -20.0 * std::exp(-0.2 * std::sqrt(z.squaredNorm() / n)) - std::exp(cos_sum / n) +
             20.0 + std::numbers::e;
    }
    case Family::schwefel: {
      double partial = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        partial += z[i];
        acc += partial * partial;
      }
      return acc;
    }
    case Family::griewank: {
      double prod = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        acc += z[i] * z[i] / 4000.0;
        prod *= std::cos(z[i] / std::sqrt(static_cast<double>(i + 1)));
      }
      return 1.0 + acc - prod;
    }
    case Family::different_powers:
      for (std::size_t i = 0; i < d; ++i)
        acc += std::pow(std::abs(z[i]), 2.0 + 4.0 * exponent_ramp(i, d));
      return acc;
  }
  return acc;
}

SyntheticObjective::SyntheticObjective(ObjectiveSpec spec, InstanceTransform transform)
    : spec_(spec),
      transform_(std::move(transform)),
      space_(SearchSpace::cube(static_cast<std::size_t>(spec.dim), -kDomainBound, kDomainBound)) {
  if (transform_.rotation.rows() != spec.dim || transform_.rotation.cols() != spec.dim ||
      transform_.x_shift.size() != spec.dim)
    fail(ErrorKind::config, "transform shape does not match objective dimension");
}

double SyntheticObjective::evaluate(const Point& p) const {
  if (p.coords.size() != static_cast<std::size_t>(spec_.dim))
    fail(ErrorKind::contract, "objective " + spec_.id() + ": wrong point dimension");
  const Eigen::Map<const Eigen::VectorXd> x(p.coords.data(), spec_.dim);
  const Eigen::VectorXd z = transform_.rotation * (x - transform_.x_shift);
  return base_function(spec_.family, z) + transform_.f_shift;
}

Point SyntheticObjective::optimum() const {
  Eigen::VectorXd z_opt = Eigen::VectorXd::Zero(spec_.dim);
  if (spec_.family == Family::rosenbrock) z_opt.setOnes();
  const Eigen::VectorXd x = transform_.x_shift + transform_.rotation.transpose() * z_opt;
  return Point{std::vector<double>(x.data(), x.data() + x.size())};
}

std::shared_ptr<const SyntheticObjective> make_objective(const ObjectiveSpec& spec) {
  if (!supported_dim(spec.dim))
    fail(ErrorKind::config, "unsupported dimension " + std::to_string(spec.dim));
  if (spec.instance < 0) fail(ErrorKind::config, "instance must be non-negative");
  return std::make_shared<const SyntheticObjective>(spec, make_transform(spec));
}

std::vector<ObjectiveSpec> desk_suite() {
  std::vector<ObjectiveSpec> specs;
  for (Family f : kAllFamilies)
    for (int d : kSuiteDims)
      for (int i = 1; i <= kSuiteInstances; ++i) specs.push_back({f, d, i});
  return specs;
}

std::string format_double(double v) {
  if (!std::isfinite(v)) {
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_run_results_csv(std::ostream& out, const std::vector<RunResult>& rows) {
  out << kRunResultHeader << '\n';
  for (const auto& r : rows) {
    out << r.objective.id() << ',' << family_name(r.objective.family) << ',' << r.objective.dim
        << ',' << r.objective.instance << ',' << r.algorithm << ',' << format_double(r.best_value)
        << ',' << r.evaluations << ',' << r.epochs << ',' << r.batch << ',' << r.seed << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <class T>
T parse_number(const std::string& s, std::size_t line_no) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::format, "results CSV line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<RunResult> read_run_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::format, "results CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunResultHeader) fail(ErrorKind::format, "results CSV header mismatch");
  std::vector<RunResult> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10)
      fail(ErrorKind::format, "results CSV line " + std::to_string(line_no) + ": expected 10 fields");
    RunResult r;
    r.objective = parse_objective_id(f[0]);
    r.algorithm = f[4];
    r.best_value = parse_number<double>(f[5], line_no);
    r.evaluations = parse_number<int>(f[6], line_no);
    r.epochs = parse_number<int>(f[7], line_no);
    r.batch = parse_number<int>(f[8], line_no);
    r.seed = parse_number<std::uint64_t>(f[9], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::optional<NormalizationTransform> reference_transform(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) return std::nullopt;
  return NormalizationTransform{*lo, *hi};
}

std::optional<std::map<std::string, double>> normalize_results(
    const std::vector<RunResult>& results, const std::set<std::string>& reference_algorithms) {
  std::vector<double> reference;
  std::set<std::string> seen;
  for (const auto& r : results) {
    if (!seen.insert(r.algorithm).second)
      fail(ErrorKind::contract, "normalize_results: algorithm '" + r.algorithm + "' appears twice");
    if (reference_algorithms.contains(r.algorithm)) reference.push_back(r.best_value);
  }
  const auto transform = reference_transform(reference);
  if (!transform) return std::nullopt;
  std::map<std::string, double> out;
  for (const auto& r : results) out[r.algorithm] = transform->apply(r.best_value);
  return out;
}

ProblemSplit sample_problem_split(const std::vector<ObjectiveSpec>& all, double train_fraction,
                                  double test_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0 && test_fraction > 0.0 && test_fraction < 1.0))
    fail(ErrorKind::config, "split fractions must lie in (0, 1)");
  if (train_fraction + test_fraction > 1.0)
    fail(ErrorKind::config, "split fractions sum to more than 1");
  const auto n = all.size();
  auto size_for = [n](double fraction) {
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    return std::max<std::size_t>(1, k);
  };
  const std::size_t n_train = size_for(train_fraction);
  const std::size_t n_test = size_for(test_fraction);
  if (n_train + n_test > n) fail(ErrorKind::config, "not enough problems for the requested split");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RngStream rng(seed, "problem-split");
  shuffle(order, rng);

  ProblemSplit split;
  for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(all[order[i]]);
  for (std::size_t i = n_train; i < n_train + n_test; ++i) split.test.push_back(all[order[i]]);
  return split;
}

ProblemSplit desk_split() {
  return sample_problem_split(desk_suite(), kDeskTrainFraction, kDeskTestFraction, kDeskSplitSeed);
}

}  // namespace fewshot
