#include "fewshot/generators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace fewshot {

Candidate make_candidate(std::span<const double> unit, const SearchSpace& space,
                         GeneratorId generator, std::optional<double> predicted) {
  Candidate c;
  c.unit.assign(unit.begin(), unit.end());
  for (auto& u : c.unit) {
    if (!std::isfinite(u)) fail(ErrorKind::contract, "generator produced a non-finite coordinate");
    u = std::clamp(u, 0.0, 1.0);
  }
  c.point = denormalize_point(c.unit, space);
  c.generator = generator;
  c.predicted = predicted;
  return c;
}

// ---------------------------------------------------------------------------
// Diversity store and trust region

void DiversityStore::add(StoreEntry entry) {
  entries_.push_back(std::move(entry));
  if (capacity_ > 0)
    while (entries_.size() > capacity_) entries_.pop_front();
}

void DiversityStore::erase_matching(const std::vector<std::vector<double>>& evaluated) {
  std::erase_if(entries_, [&](const StoreEntry& e) {
    return std::any_of(evaluated.begin(), evaluated.end(),
                       [&](const auto& u) { return euclidean_distance(u, e.unit) < 1e-12; });
  });
}

bool feeds_diversity_store(GeneratorId g) {
  return g == GeneratorId::GBM_LCB || g == GeneratorId::CMA || g == GeneratorId::CMA_N ||
         g == GeneratorId::TUR;
}

void update_diversity_store(DiversityStore& store, const std::vector<Candidate>& proposed,
                            const std::vector<bool>& selected, int epoch) {
  if (selected.size() != proposed.size())
    fail(ErrorKind::contract, "update_diversity_store: selection mask size mismatch");
  std::vector<std::vector<double>> evaluated;
  for (std::size_t i = 0; i < proposed.size(); ++i)
    if (selected[i]) evaluated.push_back(proposed[i].unit);
  store.erase_matching(evaluated);
  for (std::size_t i = 0; i < proposed.size(); ++i) {
    if (selected[i] || !feeds_diversity_store(proposed[i].generator)) continue;
    const bool was_evaluated = std::any_of(evaluated.begin(), evaluated.end(), [&](const auto& u) {
      return euclidean_distance(u, proposed[i].unit) < 1e-12;
    });
    if (!was_evaluated) store.add({proposed[i].unit, epoch, proposed[i].generator});
  }
}

TrustRegionState initial_trust_region(std::size_t dim) {
  TrustRegionState tr;
  tr.center.assign(dim, 0.5);
  return tr;
}

void update_trust_region(TrustRegionState& tr, bool improved, std::span<const double> new_center) {
  if (improved) {
    ++tr.successes;
    tr.failures = 0;
  } else {
    ++tr.failures;
    tr.successes = 0;
  }
  if (tr.successes >= TrustRegionState::kStreak) {
    tr.length = std::min(2.0 * tr.length, TrustRegionState::kMaxLength);
    tr.successes = 0;
  } else if (tr.failures >= TrustRegionState::kStreak) {
    tr.length = std::max(0.5 * tr.length, TrustRegionState::kMinLength);
    tr.failures = 0;
  }
  tr.center.assign(new_center.begin(), new_center.end());
}

// ---------------------------------------------------------------------------
// Local search helpers (unit cube)

namespace {

std::vector<double> uniform_unit(std::size_t dim, RngStream& rng) {
  std::vector<double> u(dim);
  for (auto& v : u) v = rng.uniform();
  return u;
}

struct SearchResult {
  std::vector<double> x;
  double value;
};

// Random probes followed by coordinate pattern search with step halving.
template <class Objective>
SearchResult multistart_minimize(const Objective& objective, std::size_t dim, RngStream& rng,
                                 const GeneratorConfig& config) {
  SearchResult best{uniform_unit(dim, rng), 0.0};
  best.value = objective(std::span<const double>(best.x));
  std::vector<double> probe(dim);
  for (std::size_t r = 1; r < config.restarts; ++r) {
    for (auto& v : probe) v = rng.uniform();
    const double v = objective(std::span<const double>(probe));
    if (v < best.value) {
      best.x = probe;
      best.value = v;
    }
  }
  double step = config.initial_step;
  std::size_t evals = 0;
  std::vector<double>& x = best.x;
  while (evals < config.local_search_evals && step >= config.min_step) {
    bool improved = false;
    for (std::size_t i = 0; i < dim && evals < config.local_search_evals; ++i) {
      for (double dir : {1.0, -1.0}) {
        const double old = x[i];
        x[i] = std::clamp(old + dir * step, 0.0, 1.0);
        if (x[i] == old) continue;
        const double v = objective(std::span<const double>(x));
        ++evals;
        if (v < best.value) {
          best.value = v;
          improved = true;
          break;
        }
        x[i] = old;
        if (evals >= config.local_search_evals) break;
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generators

std::vector<Candidate> gen_uniform(const SearchSpace& space, std::size_t k, RngStream& rng,
                                   GeneratorId tag) {
  std::vector<Candidate> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(make_candidate(uniform_unit(space.dim(), rng), space, tag));
  return out;
}

std::vector<Candidate> gen_lhs(const SearchSpace& space, std::size_t k, RngStream& rng) {
  if (k == 0) fail(ErrorKind::contract, "gen_lhs: k must be at least 1");
  const std::size_t dim = space.dim();
  std::vector<std::vector<double>> units(k, std::vector<double>(dim));
  std::vector<std::size_t> strata(k);
  for (std::size_t j = 0; j < dim; ++j) {
    std::iota(strata.begin(), strata.end(), 0);
    shuffle(strata, rng);
    for (std::size_t i = 0; i < k; ++i)
      units[i][j] = (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(k);
  }
  std::vector<Candidate> out;
  out.reserve(k);
  for (const auto& u : units) out.push_back(make_candidate(u, space, GeneratorId::LHS));
  return out;
}

std::vector<Candidate> gen_gbm_lcb(const SearchSpace& space, std::size_t k, const GbmEnsemble* gbm,
                                   RngStream& rng, const GeneratorConfig& config) {
  if (gbm == nullptr || !gbm->trained()) return gen_uniform(space, k, rng, GeneratorId::GBM_LCB);
  const auto acquisition = [&](std::span<const double> x) { return lcb(gbm->predict(x), config.kappa); };
  std::vector<Candidate> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    RngStream start = rng.substream("start/" + std::to_string(i));
    auto result = multistart_minimize(acquisition, space.dim(), start, config);
    out.push_back(make_candidate(result.x, space, GeneratorId::GBM_LCB, gbm->predict(result.x).mu));
  }
  return out;
}

std::vector<Candidate> gen_ggapp(const SearchSpace& space, std::size_t k,
                                 const InterestModel* forest, RngStream& rng,
                                 const GeneratorConfig& config) {
  if (forest == nullptr || !forest->trained()) return gen_uniform(space, k, rng, GeneratorId::GGAPP);
  const auto negated = [&](std::span<const double> x) { return -forest->score(x); };
  std::vector<Candidate> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    RngStream start = rng.substream("start/" + std::to_string(i));
    auto result = multistart_minimize(negated, space.dim(), start, config);
    out.push_back(make_candidate(result.x, space, GeneratorId::GGAPP));
  }
  return out;
}

namespace {

std::vector<Candidate> sample_around(const SearchSpace& space, std::size_t k, const CmaState& state,
                                     std::span<const double> center, RngStream& rng,
                                     GeneratorId tag) {
  std::vector<Candidate> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(make_candidate(cma_sample(state, center, rng), space, tag));
  return out;
}

std::vector<double> mean_of(const CmaState& state) {
  return std::vector<double>(state.mean.data(), state.mean.data() + state.mean.size());
}

}  // namespace

std::vector<Candidate> gen_cma(const SearchSpace& space, std::size_t k, const CmaState& state,
                               const Point* best, RngStream& rng) {
  const auto center = best ? normalize_point(*best, space) : mean_of(state);
  return sample_around(space, k, state, center, rng, GeneratorId::CMA);
}

std::vector<double> cma_n_center(const SearchSpace& space, const CmaState& state,
                                 const InterestModel* forest, const Point* best, RngStream& rng,
                                 const GeneratorConfig& config) {
  if (forest == nullptr || !forest->trained())
    return best ? normalize_point(*best, space) : mean_of(state);
  std::vector<double> center;
  double top = -1.0;
  for (std::size_t i = 0; i < config.probe_points; ++i) {
    auto x = uniform_unit(space.dim(), rng);
    const double s = forest->score(x);
    if (s > top) {
      top = s;
      center = std::move(x);
    }
  }
  return center;
}

std::vector<Candidate> gen_cma_n(const SearchSpace& space, std::size_t k, const CmaState& state,
                                 const InterestModel* forest, const Point* best, RngStream& rng,
                                 const GeneratorConfig& config) {
  RngStream probe = rng.substream("probe");
  const auto center = cma_n_center(space, state, forest, best, probe, config);
  return sample_around(space, k, state, center, rng, GeneratorId::CMA_N);
}

std::vector<Candidate> gen_turbo(const SearchSpace& space, std::size_t k,
                                 const TrustRegionState& tr, const GbmEnsemble* gbm,
                                 RngStream& rng, const GeneratorConfig& config) {
  const std::size_t dim = space.dim();
  if (tr.center.size() != dim) fail(ErrorKind::contract, "gen_turbo: trust region dimension mismatch");
  std::vector<double> lo(dim), hi(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    lo[j] = std::max(0.0, tr.center[j] - 0.5 * tr.length);
    hi[j] = std::min(1.0, tr.center[j] + 0.5 * tr.length);
  }
  auto draw = [&] {
    std::vector<double> u(dim);
    for (std::size_t j = 0; j < dim; ++j) u[j] = rng.uniform(lo[j], hi[j]);
    return u;
  };
  std::vector<Candidate> out;
  out.reserve(k);
  if (gbm == nullptr || !gbm->trained()) {
    for (std::size_t i = 0; i < k; ++i) out.push_back(make_candidate(draw(), space, GeneratorId::TUR));
    return out;
  }
  const std::size_t pool_size = std::max(config.turbo_pool, k);
  std::vector<std::vector<double>> pool(pool_size);
  std::vector<GbmPrediction> pred(pool_size);
  std::vector<double> acq(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) {
    pool[i] = draw();
    pred[i] = gbm->predict(pool[i]);
    acq[i] = lcb(pred[i], config.kappa);
  }
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return acq[a] < acq[b]; });
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(make_candidate(pool[order[i]], space, GeneratorId::TUR, pred[order[i]].mu));
  return out;
}

std::vector<std::vector<double>> path_relink(std::span<const double> a, std::span<const double> b,
                                             std::size_t steps) {
  if (a.size() != b.size()) fail(ErrorKind::contract, "path_relink: length mismatch");
  if (std::equal(a.begin(), a.end(), b.begin())) return {};
  std::vector<std::vector<double>> path;
  path.reserve(steps);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps + 1);
    std::vector<double> p(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) p[j] = a[j] + t * (b[j] - a[j]);
    path.push_back(std::move(p));
  }
  return path;
}

std::vector<Candidate> gen_rep(const SearchSpace& space, std::size_t k, const DiversityStore& store,
                               const Point* best, const InterestModel* forest, RngStream& rng,
                               const GeneratorConfig& config) {
  if (store.empty() || best == nullptr || forest == nullptr || !forest->trained())
    return gen_uniform(space, k, rng, GeneratorId::REP);
  const auto target = normalize_point(*best, space);
  std::vector<Candidate> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& origin = store.entries()[rng.uniform_index(store.size())].unit;
    const auto path = path_relink(origin, target, config.rep_steps);
    if (path.empty()) {
      out.push_back(gen_uniform(space, 1, rng, GeneratorId::REP).front());
      continue;
    }
    // Highest interest is the cheapest price; ties are broken at random.
    std::vector<std::size_t> top;
    double top_score = -1.0;
    for (std::size_t s = 0; s < path.size(); ++s) {
      const double score = forest->score(path[s]);
      if (score > top_score) {
        top_score = score;
        top = {s};
      } else if (score == top_score) {
        top.push_back(s);
      }
    }
    const std::size_t pick = top.size() == 1 ? top.front() : top[rng.uniform_index(top.size())];
    out.push_back(make_candidate(path[pick], space, GeneratorId::REP));
  }
  return out;
}

std::vector<Candidate> gen_rer(const SearchSpace& space, std::size_t k, const DiversityStore& store,
                               const InterestModel* forest, RngStream& rng,
                               const GeneratorConfig& config) {
  if (store.size() < 2 || forest == nullptr || !forest->trained())
    return gen_uniform(space, k, rng, GeneratorId::RER);
  const std::size_t dim = space.dim();
  std::vector<std::vector<double>> offspring(config.rer_offspring, std::vector<double>(dim));
  std::vector<double> score(config.rer_offspring);
  for (std::size_t o = 0; o < config.rer_offspring; ++o) {
    const std::size_t a = rng.uniform_index(store.size());
    std::size_t b = rng.uniform_index(store.size() - 1);
    if (b >= a) ++b;
    const auto& pa = store.entries()[a].unit;
    const auto& pb = store.entries()[b].unit;
    for (std::size_t j = 0; j < dim; ++j) offspring[o][j] = rng.uniform() < 0.5 ? pa[j] : pb[j];
    score[o] = forest->score(offspring[o]);
  }
  std::vector<std::size_t> order(offspring.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<Candidate> out;
  out.reserve(k);
  std::vector<const std::vector<double>*> kept;
  for (std::size_t idx : order) {
    if (out.size() == k) break;
    const auto& child = offspring[idx];
    if (std::any_of(kept.begin(), kept.end(), [&](const auto* p) { return *p == child; })) continue;
    kept.push_back(&child);
    out.push_back(make_candidate(child, space, GeneratorId::RER));
  }
  if (out.size() < k) {
    auto fill = gen_uniform(space, k - out.size(), rng, GeneratorId::RER);
    out.insert(out.end(), fill.begin(), fill.end());
  }
  return out;
}

}  // namespace fewshot
