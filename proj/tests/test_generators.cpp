#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "fewshot/cma.hpp"
#include "fewshot/generators.hpp"

using namespace fewshot;

namespace {

class RiggedInterest final : public InterestModel {
 public:
  explicit RiggedInterest(std::function<double(std::span<const double>)> f) : f_(std::move(f)) {}
  bool trained() const override { return true; }
  double score(std::span<const double> u) const override { return f_(u); }

 private:
  std::function<double(std::span<const double>)> f_;
};

bool in_space(const Candidate& c, const SearchSpace& s) {
  for (std::size_t i = 0; i < s.dim(); ++i)
    if (c.point.coords[i] < s.lower()[i] || c.point.coords[i] > s.upper()[i]) return false;
  for (double u : c.unit)
    if (u < 0.0 || u > 1.0) return false;
  return true;
}

GbmEnsemble quadratic_gbm(std::size_t dim, int n, std::uint64_t seed) {
  RngStream data(seed, "quad"), rng(seed, "fit");
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < n; ++i) {
    std::vector<double> u(dim);
    double v = 0.0;
    for (auto& c : u) {
      c = data.uniform();
      v += (c - 0.5) * (c - 0.5);
    }
    xs.push_back(u);
    ys.push_back(v);
  }
  return fit_gbm_unit(xs, ys, {}, rng);
}

DiversityStore store_of(const std::vector<std::vector<double>>& pts) {
  DiversityStore s;
  for (const auto& p : pts) s.add({p, 1, GeneratorId::CMA});
  return s;
}

}  // namespace

TEST_CASE("lhs puts one point in every stratum of every axis") {
  const auto space = SearchSpace::cube(3, -5, 5);
  for (std::size_t k : {1u, 4u, 7u, 16u}) {
    RngStream rng(k, "lhs");
    const auto pts = gen_lhs(space, k, rng);
    REQUIRE(pts.size() == k);
    for (std::size_t d = 0; d < 3; ++d) {
      std::set<std::size_t> strata;
      for (const auto& c : pts) strata.insert(std::min<std::size_t>(k - 1, c.unit[d] * k));
      CHECK(strata.size() == k);
    }
    for (const auto& c : pts) {
      CHECK(in_space(c, space));
      CHECK_FALSE(c.predicted.has_value());
    }
  }
  RngStream a(3, "lhs"), b(3, "lhs");
  const auto x = gen_lhs(space, 5, a), y = gen_lhs(space, 5, b);
  for (std::size_t i = 0; i < 5; ++i) CHECK(x[i].point == y[i].point);
}

TEST_CASE("gbm-lcb concentrates near the minimum of a quadratic surrogate") {
  const auto space = SearchSpace::cube(2, -5, 5);
  const auto gbm = quadratic_gbm(2, 60, 1);
  RngStream rng(2, "lcb"), base(2, "uniform");
  const auto pts = gen_gbm_lcb(space, 8, &gbm, rng);
  const auto uni = gen_uniform(space, 200, base, GeneratorId::LHS);
  auto mean_dist = [](const std::vector<Candidate>& v) {
    double s = 0;
    for (const auto& c : v) s += std::hypot(c.unit[0] - 0.5, c.unit[1] - 0.5);
    return s / v.size();
  };
  REQUIRE(pts.size() == 8);
  CHECK(mean_dist(pts) < mean_dist(uni));
  for (const auto& c : pts) {
    REQUIRE(c.predicted.has_value());
    CHECK(*c.predicted == doctest::Approx(gbm.predict(c.unit).mu));
  }
}

TEST_CASE("gbm-lcb falls back to uniform when untrained") {
  const auto space = SearchSpace::cube(4, -1, 1);
  RngStream rng(3, "lcb");
  const GbmEnsemble untrained;
  for (const auto* m : {static_cast<const GbmEnsemble*>(nullptr), &untrained}) {
    const auto pts = gen_gbm_lcb(space, 6, m, rng);
    CHECK(pts.size() == 6);
    for (const auto& c : pts) CHECK(in_space(c, space));
  }
}

TEST_CASE("gbm-lcb starts differ on a two-basin surface") {
  RngStream data(4, "basins"), fit(4, "fit");
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 80; ++i) {
    const double u = data.uniform();
    xs.push_back({u});
    ys.push_back(std::min(std::abs(u - 0.2), std::abs(u - 0.8)));
  }
  const auto gbm = fit_gbm_unit(xs, ys, {}, fit);
  RngStream rng(5, "lcb");
  const auto pts = gen_gbm_lcb(SearchSpace::cube(1, 0, 1), 8, &gbm, rng);
  std::set<double> distinct;
  for (const auto& c : pts) distinct.insert(c.unit[0]);
  CHECK(distinct.size() > 1);
}

TEST_CASE("ggapp lands in the favoured half-space") {
  const RiggedInterest left([](std::span<const double> u) { return u[0] < 0.5 ? 1.0 - u[0] : 0.0; });
  const auto space = SearchSpace::cube(2, 0, 1);
  int hits = 0, total = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream rng(s, "ggapp");
    for (const auto& c : gen_ggapp(space, 4, &left, rng)) {
      ++total;
      hits += c.unit[0] < 0.5;
      CHECK_FALSE(c.predicted.has_value());
    }
  }
  CHECK(hits >= 0.9 * total);
  RngStream rng(1, "ggapp");
  CHECK(gen_ggapp(space, 3, &left, rng).size() == 3);
  const auto fb = gen_ggapp(space, 5, nullptr, rng);
  CHECK(fb.size() == 5);
  for (const auto& c : fb) CHECK(in_space(c, space));
}

TEST_CASE("cma update keeps a symmetric, equal-valued population centred") {
  const auto space = SearchSpace::cube(2, 0, 1);
  const auto s = initial_cma_state(2);
  std::vector<EvaluationRecord> pop;
  for (auto [dx, dy] : {std::pair{0.1, 0.0}, {-0.1, 0.0}, {0.0, 0.1}, {0.0, -0.1}})
    pop.push_back({Point{{0.5 + dx, 0.5 + dy}}, 1.0});
  const auto next = cma_update(s, space, pop);
  CHECK(std::abs(next.mean[0] - 0.5) < 1e-12);
  CHECK(std::abs(next.mean[1] - 0.5) < 1e-12);
}

TEST_CASE("cma mean moves towards the better points") {
  const auto space = SearchSpace::cube(3, 0, 1);
  const auto s = initial_cma_state(3);
  std::vector<EvaluationRecord> pop;
  RngStream rng(6, "pop");
  for (int i = 0; i < 8; ++i) {
    const bool good = i < 4;
    pop.push_back({Point{{0.5 + (good ? 0.2 : -0.2), 0.5 + rng.uniform(-0.01, 0.01), 0.5}},
                   good ? 0.0 + i : 10.0 + i});
  }
  const auto next = cma_update(s, space, pop);
  CHECK(next.mean[0] > s.mean[0]);
}

TEST_CASE("cma covariance stays positive definite under random updates") {
  const auto space = SearchSpace::cube(4, 0, 1);
  auto s = initial_cma_state(4);
  RngStream rng(7, "fuzz");
  for (int t = 0; t < 100; ++t) {
    std::vector<EvaluationRecord> pop;
    for (int i = 0; i < 8; ++i) {
      std::vector<double> u(4);
      for (auto& c : u) c = rng.uniform();
      pop.push_back({Point{u}, rng.normal()});
    }
    s = cma_update(s, space, pop);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.cov);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(cma_update(s, space, {{Point{{0.1, 0.1, 0.1, 0.1}}, 1.0}}), Error);
}

TEST_CASE("cma sampling statistics and limits") {
  const auto space = SearchSpace::cube(2, 0, 1);
  auto s = initial_cma_state(2);
  s.sigma = 1.0;
  const std::vector<double> centre{0.4, 0.6};
  RngStream rng(8, "sample");
  double m0 = 0, m1 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto x = cma_sample(s, centre, rng);
    m0 += x[0];
    m1 += x[1];
  }
  CHECK(std::abs(m0 / n - 0.4) < 0.05);
  CHECK(std::abs(m1 / n - 0.6) < 0.05);

  s.sigma = 1e-300;
  const Point best{{0.25, 0.75}};
  const auto pts = gen_cma(space, 5, s, &best, rng);
  for (const auto& c : pts) {
    CHECK(c.point.coords[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(c.point.coords[1] == doctest::Approx(0.75).epsilon(1e-12));
  }
  s.sigma = 0.5;
  const Point corner{{1.0, 1.0}};
  for (const auto& c : gen_cma(space, 50, s, &corner, rng)) CHECK(in_space(c, space));
}

TEST_CASE("cma-n centres on the forest's favourite probe") {
  const auto space = SearchSpace::cube(2, 0, 1);
  const RiggedInterest peak([](std::span<const double> u) {
    return 1.0 - std::hypot(u[0] - 0.9, u[1] - 0.1);
  });
  auto s = initial_cma_state(2);
  RngStream rng(9, "cman");
  const auto c = cma_n_center(space, s, &peak, nullptr, rng, {});
  CHECK(std::hypot(c[0] - 0.9, c[1] - 0.1) < 0.15);
  const Point best{{0.3, 0.3}};
  RngStream r2(9, "cman");
  const auto fallback = cma_n_center(space, s, nullptr, &best, r2, {});
  CHECK(fallback[0] == doctest::Approx(0.3));
  CHECK(fallback[1] == doctest::Approx(0.3));
}

TEST_CASE("turbo candidates stay in the trust region") {
  const auto space = SearchSpace::cube(3, 0, 1);
  TrustRegionState tr = initial_trust_region(3);
  tr.center = {0.5, 0.2, 0.9};
  tr.length = TrustRegionState::kMinLength;
  const auto gbm = quadratic_gbm(3, 40, 10);
  RngStream rng(10, "tur");
  for (const GbmEnsemble* m : {&gbm, static_cast<const GbmEnsemble*>(nullptr)}) {
    const auto pts = gen_turbo(space, 8, tr, m, rng);
    REQUIRE(pts.size() == 8);
    for (const auto& c : pts)
      for (std::size_t d = 0; d < 3; ++d)
        CHECK(std::abs(c.unit[d] - tr.center[d]) <= tr.length / 2 + 1e-12);
  }
}

TEST_CASE("trust region expands and shrinks on streaks") {
  TrustRegionState tr = initial_trust_region(2);
  tr.length = 0.2;
  const std::vector<double> c{0.5, 0.5};
  for (int i = 0; i < 3; ++i) update_trust_region(tr, true, c);
  CHECK(tr.length == doctest::Approx(0.4));
  for (int i = 0; i < 3; ++i) update_trust_region(tr, false, c);
  CHECK(tr.length == doctest::Approx(0.2));
  tr.length = 0.8;
  for (int i = 0; i < 3; ++i) update_trust_region(tr, true, c);
  CHECK(tr.length == TrustRegionState::kMaxLength);
  tr.length = 0.06;
  for (int i = 0; i < 3; ++i) update_trust_region(tr, false, c);
  CHECK(tr.length == TrustRegionState::kMinLength);
  // A broken streak starts over.
  tr.length = 0.2;
  update_trust_region(tr, true, c);
  update_trust_region(tr, true, c);
  update_trust_region(tr, false, c);
  update_trust_region(tr, true, c);
  CHECK(tr.length == doctest::Approx(0.2));
}

TEST_CASE("path relinking examples") {
  const std::vector<double> a{0, 0}, b{1, 1};
  const auto one = path_relink(a, b, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == std::vector<double>{0.5, 0.5});
  const auto three = path_relink(a, b, 3);
  REQUIRE(three.size() == 3);
  CHECK(three[0][0] == doctest::Approx(0.25));
  CHECK(three[1][0] == doctest::Approx(0.5));
  CHECK(three[2][0] == doctest::Approx(0.75));
  CHECK(path_relink(a, a, 5).empty());
}

TEST_CASE("rep returns the best-scored relinking point") {
  const auto space = SearchSpace::cube(2, 0, 1);
  const RiggedInterest mid([](std::span<const double> u) { return 1.0 - std::abs(u[0] - 0.5); });
  const auto store = store_of({{0.0, 0.0}});
  const Point best{{1.0, 1.0}};
  RngStream rng(11, "rep");
  GeneratorConfig cfg;
  cfg.rep_steps = 9;  // fractions 0.1 .. 0.9
  const auto pts = gen_rep(space, 3, store, &best, &mid, rng, cfg);
  for (const auto& c : pts) {
    CHECK(c.unit[0] == doctest::Approx(0.5));
    CHECK(c.unit[1] == doctest::Approx(0.5));
  }
  const auto fb = gen_rep(space, 4, DiversityStore{}, &best, &mid, rng);
  CHECK(fb.size() == 4);
}

TEST_CASE("rep candidates lie on store-to-best segments") {
  const auto space = SearchSpace::cube(2, 0, 1);
  const RiggedInterest noisy([](std::span<const double> u) { return std::sin(37 * u[0]) * 0.5 + 0.5; });
  const auto store = store_of({{0.1, 0.9}, {0.8, 0.3}, {0.2, 0.2}});
  const Point best{{0.6, 0.6}};
  RngStream rng(12, "rep");
  for (const auto& c : gen_rep(space, 8, store, &best, &noisy, rng)) {
    bool on_segment = false;
    for (const auto& e : store.entries()) {
      const double dx = 0.6 - e.unit[0], dy = 0.6 - e.unit[1];
      const double t = ((c.unit[0] - e.unit[0]) * dx + (c.unit[1] - e.unit[1]) * dy) / (dx * dx + dy * dy);
      const double ex = e.unit[0] + t * dx - c.unit[0], ey = e.unit[1] + t * dy - c.unit[1];
      on_segment |= t > 0 && t < 1 && std::hypot(ex, ey) < 1e-12;
    }
    CHECK(on_segment);
  }
}

TEST_CASE("rer offspring take coordinates from their parents") {
  const auto space = SearchSpace::cube(3, 0, 1);
  const RiggedInterest flat([](std::span<const double>) { return 0.5; });
  const auto store = store_of({{0.1, 0.5, 0.7}, {0.1, 0.9, 0.7}});
  RngStream rng(13, "rer");
  const auto pts = gen_rer(space, 8, store, &flat, rng);
  REQUIRE(pts.size() == 8);
  // Only two distinct offspring exist, so six are uniform fill.
  int from_parents = 0;
  for (const auto& c : pts)
    from_parents += c.unit[0] == 0.1 && c.unit[2] == 0.7 && (c.unit[1] == 0.5 || c.unit[1] == 0.9);
  CHECK(from_parents == 2);
}

TEST_CASE("rer returns the top-scored offspring first and distinct") {
  const auto space = SearchSpace::cube(2, 0, 1);
  const RiggedInterest high_x([](std::span<const double> u) { return u[0] + 0.01 * u[1]; });
  const auto store = store_of({{0.1, 0.1}, {0.9, 0.2}, {0.3, 0.8}, {0.5, 0.5}});
  RngStream rng(14, "rer");
  const auto pts = gen_rer(space, 8, store, &high_x, rng);
  REQUIRE(pts.size() == 8);
  CHECK(pts[0].unit == std::vector<double>{0.9, 0.8});
  std::set<std::vector<double>> distinct;
  for (const auto& c : pts) distinct.insert(c.unit);
  CHECK(distinct.size() == 8);
  const auto fb = gen_rer(space, 3, store_of({{0.2, 0.2}}), &high_x, rng);
  CHECK(fb.size() == 3);
}

TEST_CASE("diversity store admits only unselected model-based proposals") {
  const auto space = SearchSpace::cube(1, 0, 1);
  std::vector<Candidate> proposed;
  for (GeneratorId g : kAllGenerators)
    proposed.push_back(make_candidate(std::vector<double>{0.1 * (1 + index_of(g))}, space, g));
  DiversityStore store(100);
  update_diversity_store(store, proposed, std::vector<bool>(8, true), 1);
  CHECK(store.empty());
  update_diversity_store(store, proposed, std::vector<bool>(8, false), 1);
  std::set<GeneratorId> kinds;
  for (const auto& e : store.entries()) kinds.insert(e.generator);
  CHECK(kinds == std::set<GeneratorId>{GeneratorId::GBM_LCB, GeneratorId::CMA, GeneratorId::CMA_N,
                                        GeneratorId::TUR});
  CHECK_FALSE(feeds_diversity_store(GeneratorId::LHS));
}

TEST_CASE("diversity store evicts the oldest entry beyond capacity") {
  DiversityStore store(100);
  for (int i = 0; i < 101; ++i) store.add({{i / 1000.0}, i + 1, GeneratorId::CMA});
  CHECK(store.size() == 100);
  CHECK(store.entries().front().epoch == 2);
  CHECK(store.entries().back().epoch == 101);
}

TEST_CASE("evaluated points leave the store") {
  const auto space = SearchSpace::cube(1, 0, 1);
  DiversityStore store(10);
  store.add({{0.3}, 1, GeneratorId::TUR});
  const std::vector<Candidate> proposed{make_candidate(std::vector<double>{0.3}, space, GeneratorId::LHS)};
  update_diversity_store(store, proposed, {true}, 2);
  CHECK(store.empty());
}

TEST_CASE("every generator returns exactly k in-bounds candidates") {
  const SearchSpace space({-2.0, 0.0, 10.0}, {3.0, 1.0, 20.0});
  const auto gbm = quadratic_gbm(3, 30, 15);
  const RiggedInterest forest([](std::span<const double> u) { return u[1]; });
  auto cma = initial_cma_state(3);
  auto tr = initial_trust_region(3);
  const auto store = store_of({{0.1, 0.2, 0.3}, {0.9, 0.8, 0.7}, {0.5, 0.5, 0.5}});
  const Point best{{0.0, 0.5, 15.0}};
  for (std::size_t k : {1u, 3u, 8u}) {
    RngStream rng(k, "all");
    std::vector<std::vector<Candidate>> outs = {
        gen_lhs(space, k, rng),
        gen_gbm_lcb(space, k, &gbm, rng),
        gen_ggapp(space, k, &forest, rng),
        gen_cma(space, k, cma, &best, rng),
        gen_cma_n(space, k, cma, &forest, &best, rng),
        gen_turbo(space, k, tr, &gbm, rng),
        gen_rep(space, k, store, &best, &forest, rng),
        gen_rer(space, k, store, &forest, rng)};
    for (std::size_t g = 0; g < outs.size(); ++g) {
      CHECK(outs[g].size() == k);
      for (const auto& c : outs[g]) {
        CHECK(in_space(c, space));
        CHECK(c.generator == kAllGenerators[g]);
      }
    }
  }
}
