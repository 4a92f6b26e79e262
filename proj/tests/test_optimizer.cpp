#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fewshot/bench.hpp"
#include "fewshot/optimizer.hpp"
#include "oracles.hpp"

using namespace fewshot;

namespace {

FunctionBlackBox sphere(std::size_t dim) {
  return FunctionBlackBox(SearchSpace::cube(dim, -5, 5), [](std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return s;
  });
}

OptimizerConfig config_for(Selector sel, int epochs = 4, int batch = 8, std::uint64_t seed = 1) {
  OptimizerConfig c;
  c.selector = sel;
  c.epochs = epochs;
  c.batch = batch;
  c.seed = seed;
  c.simulations = 20;
  return c;
}

std::vector<Selector> all_selectors() {
  WeightVector w;
  for (std::size_t i = 0; i < kFeatureCount; ++i) w.values[i] = std::sin(double(i)) * 3;
  std::vector<Selector> s{Selector::hpfso(w), Selector::rand(), Selector::bpm(), Selector::de()};
  for (GeneratorId g : kAllGenerators) s.push_back(Selector::single(g));
  return s;
}

}  // namespace

TEST_CASE("selector names round-trip") {
  for (const auto& s : all_selectors()) {
    const auto p = parse_selector(s.name());
    REQUIRE(p);
    CHECK(p->kind == s.kind);
    if (s.kind == SelectorKind::single) CHECK(p->generator == s.generator);
  }
  CHECK(parse_selector("rand")->kind == SelectorKind::rand);
  CHECK_FALSE(parse_selector("nope"));
}

TEST_CASE("config validation") {
  auto c = config_for(Selector::rand());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = config_for(Selector::rand());
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("every selector spends exactly E x B evaluations") {
  const auto bb = sphere(3);
  for (const auto& sel : all_selectors()) {
    CAPTURE(sel.name());
    CountingBlackBox counted(bb);
    const auto out = run_optimization(counted, config_for(sel, 4, 8));
    CHECK(counted.calls() == 32);
    CHECK(out.evaluations == 32);
    if (sel.kind != SelectorKind::de) {
      REQUIRE(out.trace.size() == 4);
      for (const auto& t : out.trace) {
        int sum = 0;
        for (int c : t.counts) sum += c;
        CHECK(sum == 8);
        CHECK(t.selected.size() == 8);
      }
    }
  }
}

TEST_CASE("16 epochs of 8 give 128 evaluations") {
  const auto bb = sphere(2);
  CountingBlackBox counted(bb);
  const auto out = run_optimization(counted, config_for(Selector::rand(), 16, 8));
  CHECK(counted.calls() == 128);
  CHECK(out.evaluations == 128);
}

TEST_CASE("history, incumbent and audit after every epoch") {
  const auto bb = sphere(2);
  auto cfg = config_for(all_selectors()[0], 5, 4);
  auto state = initial_state(bb.space(), cfg);
  double last = std::numeric_limits<double>::infinity();
  for (int e = 1; e <= 5; ++e) {
    run_epoch(state, bb, cfg);
    CHECK(state.epoch == e);
    CHECK(state.history.size() == std::size_t(4 * e));
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& r : state.history) lo = std::min(lo, r.value);
    REQUIRE(state.best());
    CHECK(state.best()->value == lo);
    CHECK(lo <= last);
    last = lo;
    // Every state update saw the whole batch, not only its own proposals.
    const auto& a = state.audit.back();
    CHECK(a.epoch == e);
    CHECK(a.cma_population == 4);
    CHECK(a.trust_region_records == 4);
    CHECK(a.history_size == std::size_t(4 * e));
    for (const auto& r : state.history) CHECK(r.epoch >= 1);
  }
  CHECK_THROWS_AS(run_epoch(state, bb, cfg), Error);
}

TEST_CASE("the pool does not depend on the selector") {
  const auto bb = sphere(3);
  std::vector<std::vector<std::vector<double>>> pools;
  for (const auto& sel : {Selector::rand(), Selector::bpm(), all_selectors()[0]}) {
    auto cfg = config_for(sel, 1, 8, 42);
    auto state = initial_state(bb.space(), cfg);
    refit_surrogates(state, cfg);
    std::vector<std::vector<double>> units;
    for (const auto& c : generate_pool(state, cfg)) units.push_back(c.unit);
    pools.push_back(units);
  }
  CHECK(pools[0] == pools[1]);
  CHECK(pools[0] == pools[2]);
  CHECK(pools[0].size() >= 8);
}

TEST_CASE("pool has no exact duplicates") {
  const auto bb = sphere(2);
  OptimizerState final_state(bb.space(), 80);
  run_optimization(bb, config_for(Selector::rand(), 6, 8, 5), &final_state);
  auto cfg = config_for(Selector::rand(), 7, 8, 5);
  const auto pool = generate_pool(final_state, cfg);
  std::set<std::vector<double>> seen;
  for (const auto& c : pool) CHECK(seen.insert(c.unit).second);
}

TEST_CASE("select_rand is a uniform sample without replacement") {
  RngStream rng(3, "rand");
  const auto all = select_rand(5, 5, rng);
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 5);
  CHECK_THROWS_AS(select_rand(3, 4, rng), Error);
  std::map<std::pair<std::size_t, std::size_t>, long> sets;
  for (int i = 0; i < 6000; ++i) {
    auto s = select_rand(4, 2, rng);
    std::sort(s.begin(), s.end());
    ++sets[{s[0], s[1]}];
  }
  std::vector<long> counts;
  for (auto& [_, n] : sets) counts.push_back(n);
  CHECK(counts.size() == 6);
  CHECK(oracle::chi_square_uniform(counts) < oracle::chi_square_99(5));
  RngStream a(9, "r"), b(9, "r");
  CHECK(select_rand(20, 8, a) == select_rand(20, 8, b));
}

TEST_CASE("BPM picks the cheapest candidate of every generator") {
  const auto space = SearchSpace::cube(1, 0, 1);
  std::vector<Candidate> pool;
  std::vector<double> prices;
  std::map<GeneratorId, std::size_t> cheapest;
  for (GeneratorId g : kAllGenerators)
    for (int j = 0; j < 3; ++j) {
      const double u = (index_of(g) * 3 + j) / 24.0;
      pool.push_back(make_candidate(std::vector<double>{u}, space, g));
      // Rigged prices: the middle member is the cheapest.
      prices.push_back(j == 1 ? -double(index_of(g)) : 10.0 + j);
      if (j == 1) cheapest[g] = pool.size() - 1;
    }
  RngStream rng(4, "bpm");
  const auto s = select_bpm_by_price(pool, &prices, 8, rng);
  REQUIRE(s.size() == 8);
  std::set<std::size_t> expected;
  for (auto& [_, i] : cheapest) expected.insert(i);
  CHECK(std::set<std::size_t>(s.begin(), s.end()) == expected);

  // B below 8 keeps the globally cheapest of those.
  const auto three = select_bpm_by_price(pool, &prices, 3, rng);
  CHECK(std::set<std::size_t>(three.begin(), three.end()) ==
        std::set<std::size_t>{cheapest[GeneratorId::RER], cheapest[GeneratorId::REP],
                              cheapest[GeneratorId::TUR]});
  // B above 8 fills with the next cheapest.
  const auto ten = select_bpm_by_price(pool, &prices, 10, rng);
  CHECK(ten.size() == 10);
  CHECK(std::set<std::size_t>(ten.begin(), ten.end()).size() == 10);
  for (auto& [_, i] : cheapest) CHECK(std::count(ten.begin(), ten.end(), i) == 1);
  std::size_t price10 = 0;
  for (std::size_t i : ten) price10 += prices[i] == 10.0;
  CHECK(price10 == 2);

  // Untrained: one random candidate per generator.
  const auto untrained = select_bpm(pool, 8, nullptr, rng);
  std::set<GeneratorId> gens;
  for (std::size_t i : untrained) gens.insert(pool[i].generator);
  CHECK(gens.size() == 8);
}

TEST_CASE("runs are reproducible under a seed") {
  const auto bb = sphere(3);
  for (const auto& sel : all_selectors()) {
    CAPTURE(sel.name());
    const auto a = run_optimization(bb, config_for(sel, 3, 4, 11));
    const auto b = run_optimization(bb, config_for(sel, 3, 4, 11));
    CHECK(a.best_value == b.best_value);
    CHECK(a.best_point.coords == b.best_point.coords);
  }
}

TEST_CASE("worker count does not change the result") {
  const auto bb = sphere(3);
  auto c1 = config_for(all_selectors()[0], 3, 8, 12);
  auto c4 = c1;
  c4.workers = 4;
  const auto a = run_optimization(bb, c1);
  const auto b = run_optimization(bb, c4);
  CHECK(a.best_value == b.best_value);
  std::ostringstream ta, tb;
  write_trace_json(ta, a.trace);
  write_trace_json(tb, b.trace);
  CHECK(ta.str() == tb.str());
}

TEST_CASE("a failing evaluation leaves the state of the previous epoch") {
  int calls = 0;
  FunctionBlackBox bad(SearchSpace::cube(2, -1, 1), [&](std::span<const double> x) {
    if (++calls > 10) return std::nan("");
    return x[0];
  });
  auto cfg = config_for(Selector::rand(), 4, 8);
  auto state = initial_state(bad.space(), cfg);
  run_epoch(state, bad, cfg);
  CHECK_THROWS_AS(run_epoch(state, bad, cfg), Error);
  CHECK(state.epoch == 1);
  CHECK(state.history.size() == 8);
}

TEST_CASE("DE baseline") {
  const auto bb = sphere(5);
  CountingBlackBox counted(bb);
  RngStream rng(13, "de");
  const auto out = run_de_baseline(counted, 128, rng);
  CHECK(counted.calls() == 128);
  CHECK(out.evaluations == 128);
  // Improves on its initial population (32 = budget / 4 random points).
  RngStream again(13, "de");
  double init_best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 32; ++i) {
    std::vector<double> u(5);
    for (auto& x : u) x = again.uniform();
    init_best = std::min(init_best, bb.evaluate(denormalize_point(u, bb.space())));
  }
  CHECK(out.best_value < init_best);
  RngStream r1(14, "de"), r2(14, "de");
  CHECK(run_de_baseline(bb, 50, r1).best_value == run_de_baseline(bb, 50, r2).best_value);
  RngStream r3(15, "de");
  CHECK(run_de_baseline(bb, 3, r3).evaluations == 3);
}

TEST_CASE("trace JSON round-trip") {
  const auto bb = sphere(2);
  const auto out = run_optimization(bb, config_for(all_selectors()[0], 3, 4, 2));
  std::stringstream ss;
  write_trace_json(ss, out.trace);
  const auto back = read_trace_json(ss);
  REQUIRE(back.size() == out.trace.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].epoch == out.trace[i].epoch);
    CHECK(back[i].pool_size == out.trace[i].pool_size);
    CHECK(back[i].selected == out.trace[i].selected);
    CHECK(back[i].counts == out.trace[i].counts);
    CHECK(back[i].incumbent == out.trace[i].incumbent);
  }
  std::istringstream bad("{\"epochs\": 3}");
  CHECK_THROWS_AS(read_trace_json(bad), Error);
}

TEST_CASE("single-generator modes only evaluate their generator's points") {
  const auto bb = sphere(2);
  for (GeneratorId g : kAllGenerators) {
    CAPTURE(generator_name(g));
    const auto out = run_optimization(bb, config_for(Selector::single(g), 3, 4, 3));
    for (const auto& t : out.trace) CHECK(t.counts[index_of(g)] == 4);
  }
}
