#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewshot/bench.hpp"
#include "fewshot/optimizer.hpp"
#include "fewshot/subselect.hpp"

namespace fewshot {

/// The ten reference algorithms for normalization: every single generator,
/// RAND and BPM.
std::vector<Selector> reference_selectors();

/// Seed of the run of `spec` under paired seed `seed`; shared by every
/// algorithm and weight vector.
std::uint64_t paired_run_seed(std::uint64_t seed, const ObjectiveSpec& spec);

struct FitnessConfig {
  std::vector<ObjectiveSpec> instances;
  std::vector<std::uint64_t> seeds = {1, 2};
  int epochs = 16;
  int batch = 8;
  std::size_t simulations = 100;
  std::size_t workers = 1;
};

/// Mean normalized best value of HPFSO(w) over instances x seeds. Reference
/// runs happen once, on first use; fitness values are memoized by the exact
/// bits of w.
class FitnessEvaluator {
 public:
  explicit FitnessEvaluator(FitnessConfig config);

  double fitness(const WeightVector& w);
  std::vector<double> fitness(const std::vector<WeightVector>& ws);

  /// Normalized cost per (instance, seed), instance-major; nullopt for the
  /// degenerate instances.
  std::vector<std::optional<double>> normalized_costs(const WeightVector& w);

  const std::vector<std::optional<NormalizationTransform>>& references();
  std::size_t degenerate_instances();
  std::size_t hpfso_runs() const { return hpfso_runs_; }
  const FitnessConfig& config() const { return config_; }

 private:
  using Key = std::array<std::uint64_t, kFeatureCount>;
  static Key key_of(const WeightVector& w);
  std::vector<std::vector<double>> best_values(const std::vector<WeightVector>& ws);

  FitnessConfig config_;
  std::vector<std::optional<NormalizationTransform>> references_;
  bool have_references_ = false;
  std::map<Key, double> memo_;
  std::size_t hpfso_runs_ = 0;
};

struct TunerConfig {
  std::size_t population = 20;
  std::size_t generations = 10;  // including the initial population
  std::array<double, kFeatureCount> lower;
  std::array<double, kFeatureCount> upper;
  double mutation_std = 2.0;
  double mutation_rate = 0.2;  // per gene
  double crossover_rate = 0.9;
  std::uint64_t seed = 0;
  FitnessConfig fitness;

  TunerConfig();
  void validate() const;
};

struct TunerResult {
  std::vector<WeightVector> incumbents;  // per generation
  std::vector<double> trajectory;        // incumbent fitness per generation
  std::size_t evaluations = 0;           // distinct weight vectors evaluated

  const WeightVector& best() const { return incumbents.back(); }
};

using BatchFitness = std::function<std::vector<double>(const std::vector<WeightVector>&)>;
using GenerationCallback = std::function<void(std::size_t generation, const TunerResult&)>;

/// Generational GA: uniform initialization, size-2 tournaments, uniform
/// crossover, clipped Gaussian mutation, elitism of one.
TunerResult tune(const TunerConfig& config, const BatchFitness& fitness,
                 const GenerationCallback& on_generation = {});

/// tune() against a FitnessEvaluator built from config.fitness.
TunerResult run_tuner(const TunerConfig& config, const GenerationCallback& on_generation = {});

WeightVector random_weights(RngStream& rng, double lower = -10.0, double upper = 10.0);

struct WeightProvenance {
  std::optional<std::uint64_t> tuner_seed;
  std::optional<std::size_t> generations;
  std::vector<std::string> train_ids;
};

struct WeightFile {
  WeightVector weights;
  WeightProvenance provenance;
};

void write_weight_file(std::ostream& out, const WeightVector& w, const WeightProvenance& provenance);
/// Rejects files whose layout_version differs or whose length is not 29.
WeightFile read_weight_file(std::istream& in);
void save_weight_file(const std::string& path, const WeightVector& w,
                      const WeightProvenance& provenance);
WeightFile load_weight_file(const std::string& path);

}  // namespace fewshot
