#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fewshot/core.hpp"

namespace fewshot {

enum class Family {
  sphere,
  rotated_ellipsoid,
  rastrigin,
  rosenbrock,
  ackley,
  schwefel,  // Schwefel 1.2 (cumulative sums), minimum 0 at the origin
  griewank,
  different_powers,
};

inline constexpr std::array<Family, 8> kAllFamilies = {
    Family::sphere,   Family::rotated_ellipsoid, Family::rastrigin, Family::rosenbrock,
    Family::ackley,   Family::schwefel,          Family::griewank,  Family::different_powers};
inline constexpr std::array<int, 5> kSuiteDims = {2, 3, 5, 10, 20};
inline constexpr int kSuiteInstances = 15;
inline constexpr double kDomainBound = 5.0;

std::string_view family_name(Family f);
std::optional<Family> parse_family(std::string_view name);

/// Instance 0 is the identity transform; instances >= 1 draw a seeded
/// rotation, shift and value offset.
struct ObjectiveSpec {
  Family family = Family::sphere;
  int dim = 2;
  int instance = 0;

  /// "<family>-d<dim>-i<instance>", e.g. "rastrigin-d5-i3".
  std::string id() const;
  auto operator<=>(const ObjectiveSpec&) const = default;
};

ObjectiveSpec parse_objective_id(std::string_view id);

struct InstanceTransform {
  Eigen::MatrixXd rotation;
  Eigen::VectorXd x_shift;
  double f_shift = 0.0;
};

InstanceTransform identity_transform(int dim);
InstanceTransform make_transform(const ObjectiveSpec& spec);

/// Untransformed base function value.
double base_function(Family family, const Eigen::VectorXd& z);

/// f(x) = base(R (x - shift)) + f_shift on [-5, 5]^dim.
class SyntheticObjective final : public BlackBox {
 public:
  SyntheticObjective(ObjectiveSpec spec, InstanceTransform transform);

  const SearchSpace& space() const override { return space_; }
  double evaluate(const Point& p) const override;
  std::string name() const override { return spec_.id(); }

  const ObjectiveSpec& spec() const { return spec_; }
  const InstanceTransform& transform() const { return transform_; }
  /// Known global minimizer and minimum value.
  Point optimum() const;
  double optimum_value() const { return transform_.f_shift; }

 private:
  ObjectiveSpec spec_;
  InstanceTransform transform_;
  SearchSpace space_;
};

std::shared_ptr<const SyntheticObjective> make_objective(const ObjectiveSpec& spec);

/// All families x dims x instances 1..15 (600 problems).
std::vector<ObjectiveSpec> desk_suite();

struct RunResult {
  ObjectiveSpec objective;
  std::string algorithm;
  double best_value = 0.0;
  int evaluations = 0;
  int epochs = 0;
  int batch = 0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kRunResultHeader =
    "objective,family,dim,instance,algorithm,best_value,evals,epochs,batch,seed";

void write_run_results_csv(std::ostream& out, const std::vector<RunResult>& rows);
std::vector<RunResult> read_run_results_csv(std::istream& in);
/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Affine map that sends the reference best to 0 and reference worst to 1.
struct NormalizationTransform {
  double best = 0.0;
  double worst = 1.0;
  double apply(double v) const { return (v - best) / (worst - best); }
};

/// Returns nullopt when the reference values are all equal (instance skipped).
std::optional<NormalizationTransform> reference_transform(std::span<const double> reference_values);

/// Normalizes the runs of one objective instance. Each algorithm may appear
/// once. Non-reference algorithms use the same transform and may fall
/// outside [0, 1]. Returns nullopt when normalization is undefined.
std::optional<std::map<std::string, double>> normalize_results(
    const std::vector<RunResult>& results, const std::set<std::string>& reference_algorithms);

struct ProblemSplit {
  std::vector<ObjectiveSpec> train;
  std::vector<ObjectiveSpec> test;
};

/// Each size is floor(fraction * n), at least 1. Disjoint, seeded.
ProblemSplit sample_problem_split(const std::vector<ObjectiveSpec>& all, double train_fraction,
                                  double test_fraction, std::uint64_t seed);

/// Desk-scale split of desk_suite(): 10 training and 30 test problems.
inline constexpr double kDeskTrainFraction = 0.0175;
inline constexpr double kDeskTestFraction = 0.05;
inline constexpr std::uint64_t kDeskSplitSeed = 2023;
ProblemSplit desk_split();

}  // namespace fewshot
