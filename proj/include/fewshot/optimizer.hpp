#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fewshot/cma.hpp"
#include "fewshot/core.hpp"
#include "fewshot/features.hpp"
#include "fewshot/generators.hpp"
#include "fewshot/subselect.hpp"
#include "fewshot/surrogate.hpp"

namespace fewshot {

enum class SelectorKind { hpfso, rand, bpm, single, de };

struct Selector {
  SelectorKind kind = SelectorKind::rand;
  WeightVector weights{};                    // hpfso only
  GeneratorId generator = GeneratorId::LHS;  // single only

  static Selector hpfso(const WeightVector& w) { return {SelectorKind::hpfso, w, GeneratorId::LHS}; }
  static Selector rand() { return {SelectorKind::rand, {}, GeneratorId::LHS}; }
  static Selector bpm() { return {SelectorKind::bpm, {}, GeneratorId::LHS}; }
  static Selector single(GeneratorId g) { return {SelectorKind::single, {}, g}; }
  static Selector de() { return {SelectorKind::de, {}, GeneratorId::LHS}; }

  /// "HPFSO", "RAND", "BPM", "DE", or the generator name.
  std::string name() const;
};

/// Parses a selector name as produced by Selector::name (case-insensitive).
/// HPFSO gets zero weights; the caller fills them in.
std::optional<Selector> parse_selector(std::string_view name);

struct OptimizerConfig {
  int epochs = 16;
  int batch = 8;
  Selector selector;
  std::size_t per_generator = 0;  // k; 0 means batch
  std::size_t simulations = 100;
  std::size_t store_capacity = 0;  // 0 means 10 * batch
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // concurrent evaluations within an epoch
  GbmConfig gbm;
  ForestConfig forest;
  GeneratorConfig generators;

  void validate() const;
  std::size_t k() const { return per_generator ? per_generator : static_cast<std::size_t>(batch); }
};

struct EpochTrace {
  int epoch = 0;
  std::size_t pool_size = 0;
  std::vector<std::size_t> selected;  // indices into the epoch's pool
  std::array<int, kGeneratorCount> counts{};
  double incumbent = 0.0;
};

/// What the state updates of one epoch consumed (information sharing).
struct UpdateAudit {
  int epoch = 0;
  std::size_t cma_population = 0;    // records fed to the CMA update
  std::size_t trust_region_records = 0;
  std::size_t history_size = 0;      // what the next surrogate fit sees
};

struct OptimizerState {
  explicit OptimizerState(const SearchSpace& space, std::size_t store_capacity);

  SearchSpace space;
  std::vector<EvaluationRecord> history;
  DiversityStore store;
  CmaState cma;
  TrustRegionState trust_region;
  GbmEnsemble gbm;
  InterestForest forest;
  std::optional<std::size_t> incumbent;  // index into history
  int epoch = 0;                         // completed epochs

  std::vector<EpochTrace> trace;
  std::vector<UpdateAudit> audit;
  std::vector<Candidate> last_pool;

  const EvaluationRecord* best() const { return incumbent ? &history[*incumbent] : nullptr; }
};

OptimizerState initial_state(const SearchSpace& space, const OptimizerConfig& config);

/// Refits the surrogates the configured selector and generators need (step 1).
void refit_surrogates(OptimizerState& state, const OptimizerConfig& config);

/// Generators the configured selector draws from.
std::vector<GeneratorId> active_generators(const Selector& selector);

/// Steps 2 and the pool clean-up: every active generator proposes k points,
/// exact duplicates are dropped and a short pool is topped up uniformly.
std::vector<Candidate> generate_pool(const OptimizerState& state, const OptimizerConfig& config);

std::vector<std::size_t> select_rand(std::size_t pool_size, std::size_t batch, RngStream& rng);

/// One candidate per generator with the lowest price (GBM mu), ties and
/// missing prices resolved at random; the batch is then truncated or filled
/// by the globally next-cheapest candidates.
std::vector<std::size_t> select_bpm_by_price(const std::vector<Candidate>& pool,
                                             const std::vector<double>* prices, std::size_t batch,
                                             RngStream& rng);
std::vector<std::size_t> select_bpm(const std::vector<Candidate>& pool, std::size_t batch,
                                    const GbmEnsemble* gbm, RngStream& rng);

/// One full epoch. On an evaluation failure the state is left as it was
/// before the epoch and the error is rethrown.
void run_epoch(OptimizerState& state, const BlackBox& blackbox, const OptimizerConfig& config);

struct RunOutcome {
  Point best_point;
  double best_value = 0.0;
  int evaluations = 0;
  std::vector<EpochTrace> trace;
};

/// Runs config.epochs epochs (or the DE baseline for the DE selector). When
/// `state_out` is given it receives the final, or partial, state.
RunOutcome run_optimization(const BlackBox& blackbox, const OptimizerConfig& config,
                            OptimizerState* state_out = nullptr);

struct DeConfig {
  double f = 0.8;
  double cr = 0.9;
};

/// DE/rand/1/bin with sequential evaluations, exactly `budget` of them.
RunOutcome run_de_baseline(const BlackBox& blackbox, int budget, RngStream& rng,
                           const DeConfig& config = {});

void write_trace_json(std::ostream& out, const std::vector<EpochTrace>& trace);
std::vector<EpochTrace> read_trace_json(std::istream& in);

}  // namespace fewshot
