#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "fewshot/experiment.hpp"

using namespace fewshot;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("fewshot_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

RunResult row(const std::string& id, const std::string& alg, double v, int epochs = 16,
              std::uint64_t seed = 1) {
  RunResult r;
  r.objective = parse_objective_id(id);
  r.algorithm = alg;
  r.best_value = v;
  r.epochs = epochs;
  r.batch = 8;
  r.evaluations = epochs * 8;
  r.seed = seed;
  return r;
}

json small_manifest(const fs::path& out) {
  return {{"suite", {"sphere-d2-i1", "rastrigin-d2-i2", "ackley-d3-i3"}},
          {"algorithms", {"RAND", "BPM"}},
          {"epochs", {3}},
          {"batch", 4},
          {"seeds", {1}},
          {"output_dir", out.string()},
          {"simulations", 10}};
}

}  // namespace

TEST_CASE("suite selection") {
  CHECK(parse_suite("train").size() == 10);
  CHECK(parse_suite("test").size() == 30);
  CHECK(parse_suite("desk").size() == 600);
  CHECK(parse_suite(json{"sphere-d2-i1", "griewank-d20-i15"}).size() == 2);
  CHECK_THROWS_AS(parse_suite("everything"), Error);
  CHECK_THROWS_AS(parse_suite(json{"sphere-d4-i1"}), Error);
}

TEST_CASE("manifest parsing") {
  const auto d = scratch_dir("manifest");
  WeightProvenance p;
  save_weight_file((d / "w.json").string(), WeightVector{}, p);
  json doc = small_manifest(d / "out");
  doc["algorithms"] = {"HPFSO", "RAND", {{"label", "mine"}, {"selector", "HPFSO"}, {"weights", "w.json"}}};
  const auto m = parse_manifest(doc, d.string(), (d / "w.json").string());
  REQUIRE(m.algorithms.size() == 3);
  CHECK(m.algorithms[2].label == "mine");
  CHECK(m.algorithms[2].weights_path == (d / "w.json").string());
  CHECK(m.objectives.size() == 3);
  CHECK(m.batch == 4);

  json unknown = doc;
  unknown["epoch"] = 4;
  CHECK_THROWS_AS(parse_manifest(unknown, d.string(), (d / "w.json").string()), Error);
  json missing = doc;
  missing["algorithms"] = {{{"label", "x"}, {"selector", "HPFSO"}, {"weights", "none.json"}}};
  CHECK_THROWS_AS(parse_manifest(missing, d.string(), (d / "w.json").string()), Error);
  json bad_alg = doc;
  bad_alg["algorithms"] = {"SIMPLEX"};
  CHECK_THROWS_AS(parse_manifest(bad_alg, d.string(), (d / "w.json").string()), Error);
}

TEST_CASE("report: means, ratios and the best algorithm") {
  // Two objectives, two seeds, three algorithms; reference = all.
  std::vector<RunResult> rs;
  const std::map<std::string, std::array<double, 4>> v{{"A", {1, 2, 10, 12}},
                                                       {"B", {3, 4, 20, 16}},
                                                       {"C", {5, 6, 30, 40}}};
  for (const auto& [alg, vals] : v) {
    rs.push_back(row("sphere-d2-i1", alg, vals[0], 16, 1));
    rs.push_back(row("sphere-d2-i1", alg, vals[1], 16, 2));
    rs.push_back(row("rastrigin-d2-i1", alg, vals[2], 16, 1));
    rs.push_back(row("rastrigin-d2-i1", alg, vals[3], 16, 2));
  }
  ReportConfig cfg;
  cfg.comparisons = {{"A", "C"}};
  const auto rep = build_report(rs, cfg);
  CHECK(rep.reference_epochs == 16);
  // Recompute from the raw rows: sphere best 1 worst 6; rastrigin best 10 worst 40.
  auto norm = [](double x, double lo, double hi) { return (x - lo) / (hi - lo); };
  std::map<std::string, double> expect;
  for (const auto& [alg, vals] : v) {
    const double n[4] = {norm(vals[0], 1, 6), norm(vals[1], 1, 6), norm(vals[2], 10, 40),
                         norm(vals[3], 10, 40)};
    expect[alg] = (n[0] + n[1] + n[2] + n[3]) / 4;
    const auto* s = rep.find(alg, 16);
    REQUIRE(s);
    CHECK(s->runs == 4);
    CHECK(std::abs(s->mean - expect[alg]) < 1e-9);
    double ss = 0;
    for (double x : n) ss += (x - expect[alg]) * (x - expect[alg]);
    CHECK(std::abs(s->std - std::sqrt(ss / 3)) < 1e-9);
  }
  CHECK(rep.find("A", 16)->mean_ratio == 1.0);
  CHECK(rep.find("A", 16)->std_ratio == 1.0);
  CHECK(rep.find("C", 16)->mean_ratio == doctest::Approx(expect["C"] / expect["A"]));
  REQUIRE(rep.comparisons.size() == 1);
  CHECK(rep.comparisons[0].two_sided.n == 4);
  CHECK(rep.comparisons[0].two_sided.small_sample);
  CHECK(rep.comparisons[0].less.w_plus == 0.0);

  std::ostringstream txt;
  write_summary_text(txt, rep);
  CHECK(txt.str().find("Mean/Best") != std::string::npos);
  CHECK(txt.str().find("1.000") != std::string::npos);
}

TEST_CASE("report: degenerate objectives and missing cells") {
  std::vector<RunResult> rs{row("sphere-d2-i1", "A", 1.0), row("sphere-d2-i1", "B", 1.0),
                            row("ackley-d2-i1", "A", 1.0), row("ackley-d2-i1", "B", 2.0)};
  ReportConfig cfg;
  cfg.algorithm_order = {"B", "A", "Z"};
  const auto rep = build_report(rs, cfg);
  CHECK(rep.degenerate_objectives == std::vector<std::string>{"sphere-d2-i1"});
  CHECK(rep.find("A", 16)->normalized == 1);
  CHECK(rep.find("A", 16)->mean == 0.0);
  CHECK(rep.find("B", 16)->mean == 1.0);
  CHECK(std::isnan(rep.find("B", 16)->mean_ratio));  // best mean is 0
  std::ostringstream txt;
  write_summary_text(txt, rep);
  CHECK(txt.str().find('-') != std::string::npos);
}

TEST_CASE("epoch grid gives the by-epoch block") {
  std::vector<RunResult> rs;
  for (int e : {4, 8, 12, 16, 24})
    for (const char* a : {"A", "B"}) {
      rs.push_back(row("sphere-d2-i1", a, (a[0] == 'A' ? 1.0 : 2.0) * (30 - e), e));
      rs.push_back(row("ackley-d2-i1", a, (a[0] == 'A' ? 1.5 : 2.0) * (30 - e), e));
    }
  const auto rep = build_report(rs, {});
  CHECK(rep.epochs == std::vector<int>{4, 8, 12, 16, 24});
  CHECK(rep.reference_epochs == 16);
  std::ostringstream txt;
  write_summary_text(txt, rep);
  const auto s = txt.str();
  const auto block = s.find("by epoch count (Mean / Std)");
  REQUIRE(block != std::string::npos);
  std::istringstream lines(s.substr(block));
  std::string title, header, ra, rb;
  std::getline(lines, title);
  std::getline(lines, header);
  std::getline(lines, ra);
  std::getline(lines, rb);
  for (int e : {4, 8, 12, 16, 24}) CHECK(header.find(std::to_string(e) + " epochs") != std::string::npos);
  CHECK(ra.rfind("A", 0) == 0);
  CHECK(rb.rfind("B", 0) == 0);
  // Reference at 16 epochs: A at 16 is the best (0) and B the worst (1).
  CHECK(rep.find("A", 16)->mean == 0.0);
  CHECK(rep.find("B", 16)->mean == 1.0);
  // Fewer epochs cost more than the reference range, so values exceed 1.
  CHECK(ra.find("/") != std::string::npos);
  CHECK(rep.find("B", 4)->mean > 1.0);
}

TEST_CASE("bench: 2 algorithms x 3 instances") {
  const auto d = scratch_dir("bench");
  const auto m = parse_manifest(small_manifest(d / "out"), d.string(), "");
  const auto out = run_bench(m);
  CHECK(out.results.size() == 6);
  CHECK(out.failures.empty());
  for (const auto& r : out.results) CHECK(r.evaluations == 12);
  for (const char* f : {"results.csv", "normalized.csv", "summary.csv", "summary.txt", "wilcoxon.csv",
                        "generator_counts.csv", "failures.txt"})
    CHECK(fs::exists(d / "out" / f));

  std::ifstream in(d / "out" / "results.csv");
  const auto back = read_run_results_csv(in);
  REQUIRE(back.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back[i].best_value == out.results[i].best_value);
    CHECK(back[i].algorithm == out.results[i].algorithm);
  }

  // Summary means recomputed from the raw rows.
  const auto rows = read_csv(d / "out" / "summary.csv");
  REQUIRE(rows.size() == 3);
  std::map<std::string, std::vector<double>> by_obj;
  for (const auto& r : back) by_obj[r.objective.id()].push_back(r.best_value);
  std::map<std::string, std::vector<double>> norm;
  for (const auto& r : back) {
    auto& vals = by_obj[r.objective.id()];
    const double lo = *std::min_element(vals.begin(), vals.end());
    const double hi = *std::max_element(vals.begin(), vals.end());
    if (hi > lo) norm[r.algorithm].push_back((r.best_value - lo) / (hi - lo));
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& n = norm[rows[i][0]];
    CHECK(std::abs(std::stod(rows[i][4]) - mean(n)) < 1e-9);
    CHECK(std::abs(std::stod(rows[i][5]) - sample_std(n)) < 1e-9);
  }

  const auto counts = read_csv(d / "out" / "generator_counts.csv");
  REQUIRE(counts.size() == 1 + 2 * 3);
  for (std::size_t i = 1; i < counts.size(); ++i) {
    long sum = 0;
    for (std::size_t c = 3; c < counts[i].size(); ++c) sum += std::stol(counts[i][c]);
    CHECK(sum == 3 * 4);  // three objectives x batch of four per epoch
  }

  // Same manifest again: identical bytes.
  const auto first = slurp(d / "out" / "results.csv");
  const auto first_summary = slurp(d / "out" / "summary.txt");
  auto m2 = m;
  m2.workers = 3;
  run_bench(m2);
  CHECK(slurp(d / "out" / "results.csv") == first);
  CHECK(slurp(d / "out" / "summary.txt") == first_summary);
}

TEST_CASE("tune job writes snapshots and a trajectory") {
  const auto d = scratch_dir("tune");
  json cfg = {{"population", 2},
              {"generations", 10},
              {"seed", 3},
              {"train", {"sphere-d2-i1", "ackley-d2-i2"}},
              {"seeds", {1}},
              {"epochs", 2},
              {"batch", 2},
              {"simulations", 5}};
  const auto tc = parse_tuner_config(cfg);
  CHECK(tc.population == 2);
  CHECK(tc.fitness.instances.size() == 2);
  const auto r = run_tune_job(tc, d.string());
  for (const char* f : {"weights_gen5.json", "weights_gen10.json", "weights.json", "weights_latest.json",
                        "trajectory.csv"})
    CHECK(fs::exists(d / f));
  CHECK_FALSE(fs::exists(d / "weights_gen4.json"));
  const auto traj = read_csv(d / "trajectory.csv");
  REQUIRE(traj.size() == 11);
  for (std::size_t i = 2; i < traj.size(); ++i) CHECK(std::stod(traj[i][1]) <= std::stod(traj[i - 1][1]));
  const auto w = load_weight_file((d / "weights.json").string());
  CHECK(w.weights == r.best());
  CHECK(w.provenance.generations == 10u);
  const auto g5 = load_weight_file((d / "weights_gen5.json").string());
  CHECK(g5.weights == r.incumbents[4]);

  const auto first = slurp(d / "weights.json");
  const auto first_traj = slurp(d / "trajectory.csv");
  run_tune_job(tc, d.string());
  CHECK(slurp(d / "weights.json") == first);
  CHECK(slurp(d / "trajectory.csv") == first_traj);

  CHECK_THROWS_AS(parse_tuner_config(json{{"populaton", 4}}), Error);
  CHECK_THROWS_AS(parse_tuner_config(json{{"lower", {1, 2}}}), Error);
}

TEST_CASE("single runs use the paired seed") {
  const auto spec = parse_objective_id("rosenbrock-d3-i2");
  const auto a = run_single(spec, Selector::rand(), 3, 4, 7, 1, 10);
  const auto b = run_single(spec, Selector::rand(), 3, 4, 7, 2, 10);
  CHECK(a.result.best_value == b.result.best_value);
  CHECK(a.result.seed == 7);
  CHECK(a.result.evaluations == 12);
  CHECK(a.result.algorithm == "RAND");
}
