#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "fewshot/cma.hpp"
#include "fewshot/core.hpp"
#include "fewshot/rng.hpp"
#include "fewshot/surrogate.hpp"

namespace fewshot {

struct Candidate {
  Point point;
  std::vector<double> unit;  // point in unit-cube coordinates
  GeneratorId generator = GeneratorId::LHS;
  std::optional<double> predicted;  // the generator's own anticipated value
};

/// Clips `unit` to the cube and derives the original-units point.
Candidate make_candidate(std::span<const double> unit, const SearchSpace& space,
                         GeneratorId generator, std::optional<double> predicted = std::nullopt);

struct StoreEntry {
  std::vector<double> unit;
  int epoch = 1;
  GeneratorId generator = GeneratorId::LHS;
};

/// Proposed-but-never-evaluated points from the model-based and CMA
/// generators. FIFO with an optional capacity (0 = unbounded).
class DiversityStore {
 public:
  explicit DiversityStore(std::size_t capacity = 0) : capacity_(capacity) {}

  void add(StoreEntry entry);
  /// Drops every entry that coincides with one of `evaluated` (unit coords).
  void erase_matching(const std::vector<std::vector<double>>& evaluated);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<StoreEntry>& entries() const { return entries_; }

 private:
  std::deque<StoreEntry> entries_;
  std::size_t capacity_;
};

bool feeds_diversity_store(GeneratorId g);

void update_diversity_store(DiversityStore& store, const std::vector<Candidate>& proposed,
                            const std::vector<bool>& selected, int epoch);

/// Single trust region for TUR, in unit-cube units.
struct TrustRegionState {
  static constexpr double kMinLength = 0.05;
  static constexpr double kMaxLength = 1.0;
  static constexpr int kStreak = 3;

  std::vector<double> center;
  double length = 0.8;
  int successes = 0;
  int failures = 0;
};

TrustRegionState initial_trust_region(std::size_t dim);

/// Doubles the side after kStreak consecutive improving epochs, halves it
/// after kStreak consecutive non-improving epochs, and recentres.
void update_trust_region(TrustRegionState& tr, bool improved, std::span<const double> new_center);

struct GeneratorConfig {
  double kappa = 2.0;
  std::size_t restarts = 8;             // random probes per local search start
  std::size_t local_search_evals = 40;  // pattern-search budget per start
  double initial_step = 0.2;
  double min_step = 1e-3;
  std::size_t probe_points = 256;  // CMA-N centre search
  std::size_t turbo_pool = 256;
  std::size_t rep_steps = 10;
  std::size_t rer_offspring = 1000;
};

std::vector<Candidate> gen_uniform(const SearchSpace& space, std::size_t k, RngStream& rng,
                                   GeneratorId tag);

std::vector<Candidate> gen_lhs(const SearchSpace& space, std::size_t k, RngStream& rng);

/// Seeded multi-start minimization of mu - kappa*sigma. Falls back to uniform
/// points when the ensemble is missing or untrained.
std::vector<Candidate> gen_gbm_lcb(const SearchSpace& space, std::size_t k, const GbmEnsemble* gbm,
                                   RngStream& rng, const GeneratorConfig& config = {});

/// Multi-start local search maximizing the interest score.
std::vector<Candidate> gen_ggapp(const SearchSpace& space, std::size_t k,
                                 const InterestModel* forest, RngStream& rng,
                                 const GeneratorConfig& config = {});

/// k samples from N(best, sigma^2 C); the CMA mean is used before any point
/// has been evaluated.
std::vector<Candidate> gen_cma(const SearchSpace& space, std::size_t k, const CmaState& state,
                               const Point* best, RngStream& rng);

/// Like gen_cma, centred on the best interest score over a uniform probe set.
std::vector<Candidate> gen_cma_n(const SearchSpace& space, std::size_t k, const CmaState& state,
                                 const InterestModel* forest, const Point* best, RngStream& rng,
                                 const GeneratorConfig& config = {});

/// Centre used by gen_cma_n.
std::vector<double> cma_n_center(const SearchSpace& space, const CmaState& state,
                                 const InterestModel* forest, const Point* best, RngStream& rng,
                                 const GeneratorConfig& config);

/// Best-k LCB points from a uniform pool inside the trust region.
std::vector<Candidate> gen_turbo(const SearchSpace& space, std::size_t k,
                                 const TrustRegionState& tr, const GbmEnsemble* gbm,
                                 RngStream& rng, const GeneratorConfig& config = {});

/// Interior points of the segment a->b at fractions i/(steps+1).
std::vector<std::vector<double>> path_relink(std::span<const double> a, std::span<const double> b,
                                             std::size_t steps);

std::vector<Candidate> gen_rep(const SearchSpace& space, std::size_t k, const DiversityStore& store,
                               const Point* best, const InterestModel* forest, RngStream& rng,
                               const GeneratorConfig& config = {});

std::vector<Candidate> gen_rer(const SearchSpace& space, std::size_t k, const DiversityStore& store,
                               const InterestModel* forest, RngStream& rng,
                               const GeneratorConfig& config = {});

}  // namespace fewshot
