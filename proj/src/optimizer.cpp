#include "fewshot/optimizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "fewshot/parallel.hpp"

namespace fewshot {

namespace {

constexpr double kDuplicateDistance = 1e-12;

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool needs_gbm(const OptimizerConfig& config, const std::vector<GeneratorId>& active) {
  const auto kind = config.selector.kind;
  if (kind == SelectorKind::hpfso || kind == SelectorKind::bpm) return true;
  return std::any_of(active.begin(), active.end(), [](GeneratorId g) {
    return g == GeneratorId::GBM_LCB || g == GeneratorId::TUR;
  });
}

bool needs_forest(const std::vector<GeneratorId>& active) {
  return std::any_of(active.begin(), active.end(), [](GeneratorId g) {
    return g == GeneratorId::GGAPP || g == GeneratorId::CMA_N || g == GeneratorId::REP ||
           g == GeneratorId::RER;
  });
}

RngStream epoch_stream(const OptimizerConfig& config, int epoch) {
  return RngStream(config.seed, "run").substream("epoch/" + std::to_string(epoch));
}

std::vector<Candidate> propose(GeneratorId g, const OptimizerState& state,
                               const OptimizerConfig& config, std::size_t k, RngStream rng) {
  const auto& space = state.space;
  const auto& cfg = config.generators;
  const Point* best = state.best() ? &state.best()->point : nullptr;
  const GbmEnsemble* gbm = state.gbm.trained() ? &state.gbm : nullptr;
  const InterestModel* forest = state.forest.trained() ? &state.forest : nullptr;
  switch (g) {
    case GeneratorId::LHS: return gen_lhs(space, k, rng);
    case GeneratorId::GBM_LCB: return gen_gbm_lcb(space, k, gbm, rng, cfg);
    case GeneratorId::GGAPP: return gen_ggapp(space, k, forest, rng, cfg);
    case GeneratorId::CMA: return gen_cma(space, k, state.cma, best, rng);
    case GeneratorId::CMA_N: return gen_cma_n(space, k, state.cma, forest, best, rng, cfg);
    case GeneratorId::TUR: return gen_turbo(space, k, state.trust_region, gbm, rng, cfg);
    case GeneratorId::REP: return gen_rep(space, k, state.store, best, forest, rng, cfg);
    case GeneratorId::RER: return gen_rer(space, k, state.store, forest, rng, cfg);
  }
  fail(ErrorKind::contract, "unknown generator");
}

bool is_duplicate(const std::vector<Candidate>& pool, const std::vector<double>& unit) {
  return std::any_of(pool.begin(), pool.end(), [&](const Candidate& c) {
    return euclidean_distance(c.unit, unit) < kDuplicateDistance;
  });
}

void append_unique(std::vector<Candidate>& pool, std::vector<Candidate> proposed) {
  for (auto& c : proposed)
    if (!is_duplicate(pool, c.unit)) pool.push_back(std::move(c));
}

/// Adds uniform points tagged `tag` until `count(pool)` reaches `target`.
template <class Count>
void top_up(std::vector<Candidate>& pool, const SearchSpace& space, std::size_t target,
            GeneratorId tag, RngStream& rng, Count count) {
  while (count(pool) < target) {
    auto extra = gen_uniform(space, 1, rng, tag);
    if (!is_duplicate(pool, extra.front().unit)) pool.push_back(std::move(extra.front()));
  }
}

}  // namespace

std::string Selector::name() const {
  switch (kind) {
    case SelectorKind::hpfso: return "HPFSO";
    case SelectorKind::rand: return "RAND";
    case SelectorKind::bpm: return "BPM";
    case SelectorKind::de: return "DE";
    case SelectorKind::single: return std::string(generator_name(generator));
  }
  return "?";
}

std::optional<Selector> parse_selector(std::string_view name) {
  const std::string u = upper(name);
  if (u == "HPFSO") return Selector::hpfso({});
  if (u == "RAND") return Selector::rand();
  if (u == "BPM") return Selector::bpm();
  if (u == "DE") return Selector::de();
  for (GeneratorId g : kAllGenerators)
    if (upper(generator_name(g)) == u) return Selector::single(g);
  if (auto g = parse_generator(name)) return Selector::single(*g);
  return std::nullopt;
}

void OptimizerConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::config, "epochs must be at least 1");
  if (batch < 1) fail(ErrorKind::config, "batch must be at least 1");
  if (simulations < 1) fail(ErrorKind::config, "simulations must be at least 1");
  if (workers < 1) fail(ErrorKind::config, "workers must be at least 1");
  if (selector.kind == SelectorKind::hpfso)
    for (double w : selector.weights.values)
      if (!std::isfinite(w)) fail(ErrorKind::config, "HPFSO weights must be finite");
}

OptimizerState::OptimizerState(const SearchSpace& s, std::size_t store_capacity)
    : space(s),
      store(store_capacity),
      cma(initial_cma_state(s.dim())),
      trust_region(initial_trust_region(s.dim())) {}

OptimizerState initial_state(const SearchSpace& space, const OptimizerConfig& config) {
  config.validate();
  const std::size_t capacity =
      config.store_capacity ? config.store_capacity : 10 * static_cast<std::size_t>(config.batch);
  return OptimizerState(space, capacity);
}

std::vector<GeneratorId> active_generators(const Selector& selector) {
  switch (selector.kind) {
    case SelectorKind::de: return {};
    case SelectorKind::single: {
      std::vector<GeneratorId> out;
      // The recombination generators only have material to work with when the
      // store-feeding generators run alongside them.
      if (selector.generator == GeneratorId::REP || selector.generator == GeneratorId::RER)
        for (GeneratorId g : kAllGenerators)
          if (feeds_diversity_store(g)) out.push_back(g);
      out.push_back(selector.generator);
      return out;
    }
    default: return {kAllGenerators.begin(), kAllGenerators.end()};
  }
}

void refit_surrogates(OptimizerState& state, const OptimizerConfig& config) {
  const auto active = active_generators(config.selector);
  auto rng = epoch_stream(config, state.epoch + 1);
  if (needs_gbm(config, active)) {
    auto fit_rng = rng.substream("fit/gbm");
    state.gbm = fit_gbm(state.history, state.space, config.gbm, fit_rng);
  } else {
    state.gbm = GbmEnsemble();
  }
  if (needs_forest(active)) {
    auto fit_rng = rng.substream("fit/forest");
    state.forest = fit_interest_forest(state.history, state.space, config.forest, fit_rng);
  } else {
    state.forest = InterestForest();
  }
}

std::vector<Candidate> generate_pool(const OptimizerState& state, const OptimizerConfig& config) {
  const auto active = active_generators(config.selector);
  const auto rng = epoch_stream(config, state.epoch + 1);
  const std::size_t batch = static_cast<std::size_t>(config.batch);
  std::vector<Candidate> pool;
  for (GeneratorId g : active) {
    const auto label = "gen/" + std::string(generator_name(g));
    append_unique(pool, propose(g, state, config, config.k(), rng.substream(label)));
  }
  auto fill = rng.substream("fill");
  if (config.selector.kind == SelectorKind::single) {
    const GeneratorId g = config.selector.generator;
    top_up(pool, state.space, batch, g, fill, [g](const std::vector<Candidate>& p) {
      return static_cast<std::size_t>(std::count_if(
          p.begin(), p.end(), [g](const Candidate& c) { return c.generator == g; }));
    });
  } else {
    top_up(pool, state.space, batch, GeneratorId::LHS, fill,
           [](const std::vector<Candidate>& p) { return p.size(); });
  }
  return pool;
}

std::vector<std::size_t> select_rand(std::size_t pool_size, std::size_t batch, RngStream& rng) {
  if (pool_size < batch)
    fail(ErrorKind::contract, "select_rand: pool of " + std::to_string(pool_size) +
                                  " is smaller than the batch");
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < batch; ++i) std::swap(order[i], order[i + rng.uniform_index(pool_size - i)]);
  order.resize(batch);
  return order;
}

std::vector<std::size_t> select_bpm_by_price(const std::vector<Candidate>& pool,
                                             const std::vector<double>* prices, std::size_t batch,
                                             RngStream& rng) {
  if (pool.size() < batch) fail(ErrorKind::contract, "select_bpm: pool is smaller than the batch");
  if (prices && prices->size() != pool.size())
    fail(ErrorKind::contract, "select_bpm: one price per candidate is required");

  std::vector<std::size_t> picks;
  std::vector<bool> taken(pool.size(), false);
  for (GeneratorId g : kAllGenerators) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i].generator == g) members.push_back(i);
    if (members.empty()) continue;
    std::vector<std::size_t> best;
    if (prices) {
      double lo = std::numeric_limits<double>::infinity();
      for (std::size_t i : members) lo = std::min(lo, (*prices)[i]);
      for (std::size_t i : members)
        if ((*prices)[i] == lo) best.push_back(i);
    } else {
      best = members;
    }
    const std::size_t pick = best[rng.uniform_index(best.size())];
    picks.push_back(pick);
    taken[pick] = true;
  }

  // Random order first, then a stable sort by price: ties stay random.
  auto rank = [&](std::vector<std::size_t>& v) {
    shuffle(v, rng);
    if (prices)
      std::stable_sort(v.begin(), v.end(),
                       [&](std::size_t a, std::size_t b) { return (*prices)[a] < (*prices)[b]; });
  };
  if (picks.size() > batch) {
    rank(picks);
    picks.resize(batch);
  } else if (picks.size() < batch) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!taken[i]) rest.push_back(i);
    rank(rest);
    picks.insert(picks.end(), rest.begin(),
                 rest.begin() + static_cast<std::ptrdiff_t>(batch - picks.size()));
  }
  return picks;
}

std::vector<std::size_t> select_bpm(const std::vector<Candidate>& pool, std::size_t batch,
                                    const GbmEnsemble* gbm, RngStream& rng) {
  if (gbm == nullptr || !gbm->trained()) return select_bpm_by_price(pool, nullptr, batch, rng);
  std::vector<double> prices;
  prices.reserve(pool.size());
  for (const auto& c : pool) prices.push_back(gbm->predict(c.unit).mu);
  return select_bpm_by_price(pool, &prices, batch, rng);
}

void run_epoch(OptimizerState& state, const BlackBox& blackbox, const OptimizerConfig& config) {
  config.validate();
  if (state.epoch >= config.epochs)
    fail(ErrorKind::contract, "run_epoch: all " + std::to_string(config.epochs) + " epochs are done");
  if (config.selector.kind == SelectorKind::de)
    fail(ErrorKind::contract, "run_epoch: the DE baseline has no epochs");
  const int epoch = state.epoch + 1;
  const std::size_t batch = static_cast<std::size_t>(config.batch);
  auto rng = epoch_stream(config, epoch);

  refit_surrogates(state, config);
  std::vector<Candidate> pool = generate_pool(state, config);

  auto select_rng = rng.substream("select");
  std::vector<std::size_t> selected;
  switch (config.selector.kind) {
    case SelectorKind::hpfso: {
      FeatureContext ctx(state.space, state.history, epoch, config.epochs, &state.gbm);
      selected = select_batch(pool, ctx, config.selector.weights, {batch, config.simulations},
                              select_rng);
      break;
    }
    case SelectorKind::rand: selected = select_rand(pool.size(), batch, select_rng); break;
    case SelectorKind::bpm: selected = select_bpm(pool, batch, &state.gbm, select_rng); break;
    case SelectorKind::single:
      for (std::size_t i = 0; i < pool.size() && selected.size() < batch; ++i)
        if (pool[i].generator == config.selector.generator) selected.push_back(i);
      break;
    case SelectorKind::de: break;
  }

  std::vector<double> values(selected.size());
  parallel_for(selected.size(), config.workers, [&](std::size_t i) {
    values[i] = blackbox.evaluate(pool[selected[i]].point);
  });
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      fail(ErrorKind::runtime, blackbox.name() + " returned a non-finite value");

  const std::optional<double> previous = state.best() ? std::optional(state.best()->value) : std::nullopt;
  std::vector<EvaluationRecord> fresh;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const Candidate& c = pool[selected[i]];
    EvaluationRecord r{c.point, values[i], c.generator, c.predicted, epoch};
    if (state.gbm.trained()) r.predicted = state.gbm.predict(c.unit).mu;
    fresh.push_back(r);
  }
  for (auto& r : fresh) {
    state.history.push_back(r);
    const std::size_t idx = state.history.size() - 1;
    if (!state.incumbent || r.value < state.history[*state.incumbent].value) state.incumbent = idx;
  }

  state.cma = cma_update(state.cma, state.space, fresh);
  const auto best_unit = normalize_point(state.best()->point, state.space);
  if (previous) {
    const double epoch_best = *std::min_element(values.begin(), values.end());
    update_trust_region(state.trust_region, epoch_best < *previous, best_unit);
  } else {
    state.trust_region.center = best_unit;
  }
  std::vector<bool> mask(pool.size(), false);
  for (std::size_t i : selected) mask[i] = true;
  update_diversity_store(state.store, pool, mask, epoch);

  EpochTrace t;
  t.epoch = epoch;
  t.pool_size = pool.size();
  t.selected = selected;
  for (std::size_t i : selected) ++t.counts[index_of(pool[i].generator)];
  t.incumbent = state.best()->value;
  state.trace.push_back(std::move(t));
  state.audit.push_back({epoch, fresh.size(), fresh.size(), state.history.size()});
  state.last_pool = std::move(pool);
  state.epoch = epoch;
}

RunOutcome run_optimization(const BlackBox& blackbox, const OptimizerConfig& config,
                            OptimizerState* state_out) {
  config.validate();
  if (config.selector.kind == SelectorKind::de) {
    RngStream rng(config.seed, "de");
    return run_de_baseline(blackbox, config.epochs * config.batch, rng);
  }
  OptimizerState state = initial_state(blackbox.space(), config);
  try {
    while (state.epoch < config.epochs) run_epoch(state, blackbox, config);
  } catch (...) {
    if (state_out) *state_out = std::move(state);
    throw;
  }
  RunOutcome out;
  out.best_point = state.best()->point;
  out.best_value = state.best()->value;
  out.evaluations = static_cast<int>(state.history.size());
  out.trace = state.trace;
  if (state_out) *state_out = std::move(state);
  return out;
}

RunOutcome run_de_baseline(const BlackBox& blackbox, int budget, RngStream& rng,
                           const DeConfig& config) {
  if (budget < 1) fail(ErrorKind::config, "DE budget must be positive");
  const auto& space = blackbox.space();
  const std::size_t dim = space.dim();
  const std::size_t np = std::max<std::size_t>(
      4, std::min<std::size_t>(10 * dim, static_cast<std::size_t>(budget) / 4));

  RunOutcome out;
  out.best_value = std::numeric_limits<double>::infinity();
  auto evaluate = [&](const std::vector<double>& u) {
    const Point p = denormalize_point(u, space);
    const double v = blackbox.evaluate(p);
    if (!std::isfinite(v)) fail(ErrorKind::runtime, blackbox.name() + " returned a non-finite value");
    ++out.evaluations;
    if (v < out.best_value) {
      out.best_value = v;
      out.best_point = p;
    }
    return v;
  };

  std::vector<std::vector<double>> pop;
  std::vector<double> fit;
  for (std::size_t i = 0; i < np && out.evaluations < budget; ++i) {
    std::vector<double> u(dim);
    for (auto& x : u) x = rng.uniform();
    fit.push_back(evaluate(u));
    pop.push_back(std::move(u));
  }
  if (pop.size() < 4) return out;

  std::vector<double> trial(dim);
  while (out.evaluations < budget) {
    for (std::size_t i = 0; i < np && out.evaluations < budget; ++i) {
      std::size_t r[3];
      for (std::size_t j = 0; j < 3; ++j) {
        do {
          r[j] = rng.uniform_index(np);
        } while (r[j] == i || (j > 0 && r[j] == r[0]) || (j > 1 && r[j] == r[1]));
      }
      const std::size_t forced = rng.uniform_index(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        if (d == forced || rng.uniform() < config.cr)
          trial[d] = std::clamp(pop[r[0]][d] + config.f * (pop[r[1]][d] - pop[r[2]][d]), 0.0, 1.0);
        else
          trial[d] = pop[i][d];
      }
      const double v = evaluate(trial);
      if (v <= fit[i]) {
        pop[i] = trial;
        fit[i] = v;
      }
    }
  }
  return out;
}

void write_trace_json(std::ostream& out, const std::vector<EpochTrace>& trace) {
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& t : trace) {
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (GeneratorId g : kAllGenerators) counts[std::string(generator_name(g))] = t.counts[index_of(g)];
    epochs.push_back({{"epoch", t.epoch},
                      {"pool_size", t.pool_size},
                      {"selected", t.selected},
                      {"counts", counts},
                      {"incumbent", t.incumbent}});
  }
  nlohmann::ordered_json doc;
  doc["epochs"] = epochs;
  out << doc.dump(2) << '\n';
}

std::vector<EpochTrace> read_trace_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("trace: ") + e.what());
  }
  std::vector<EpochTrace> trace;
  try {
    for (const auto& e : doc.at("epochs")) {
      EpochTrace t;
      t.epoch = e.at("epoch").get<int>();
      t.pool_size = e.at("pool_size").get<std::size_t>();
      t.selected = e.at("selected").get<std::vector<std::size_t>>();
      for (GeneratorId g : kAllGenerators)
        t.counts[index_of(g)] = e.at("counts").at(std::string(generator_name(g))).get<int>();
      t.incumbent = e.at("incumbent").get<double>();
      trace.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("trace: ") + e.what());
  }
  return trace;
}

}  // namespace fewshot
