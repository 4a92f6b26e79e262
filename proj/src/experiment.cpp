#include "fewshot/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "fewshot/parallel.hpp"

namespace fewshot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::runtime, "cannot write " + path.string());
  return out;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::runtime, "cannot create " + dir + ": " + ec.message());
}

// Write to a temporary file first, so an interrupted run never leaves a torn file.
template <class Fn>
void write_file_atomic(const fs::path& path, Fn&& body) {
  const fs::path tmp = path.string() + ".tmp";
  {
    auto out = open_output(tmp);
    body(out);
    if (!out) fail(ErrorKind::runtime, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::runtime, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : ""; }

std::string fixed3(double v) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

template <class T>
std::vector<T> one_or_many(const json& v) {
  if (v.is_array()) return v.get<std::vector<T>>();
  return {v.get<T>()};
}

std::vector<std::pair<std::string, std::string>> parse_pairs(const json& v) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2) fail(ErrorKind::config, "each comparison is a pair of labels");
    out.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
  }
  return out;
}

void reject_unknown(const json& doc, std::initializer_list<const char*> keys, const char* what) {
  for (const auto& [k, _] : doc.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; }))
      fail(ErrorKind::config, std::string(what) + ": unknown key \"" + k + "\"");
}

}  // namespace

std::vector<ObjectiveSpec> parse_suite(const json& suite) {
  try {
    if (suite.is_string()) {
      const auto name = suite.get<std::string>();
      if (name == "train") return desk_split().train;
      if (name == "test") return desk_split().test;
      if (name == "desk") return desk_suite();
      fail(ErrorKind::config, "unknown suite \"" + name + "\" (train, test, desk or a list of ids)");
    }
    if (!suite.is_array() || suite.empty())
      fail(ErrorKind::config, "suite must be train, test, desk or a nonempty list of ids");
    std::vector<ObjectiveSpec> out;
    for (const auto& id : suite) out.push_back(parse_objective_id(id.get<std::string>()));
    return out;
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("suite: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

ExperimentManifest parse_manifest(const json& doc, const std::string& base_dir,
                                  const std::string& default_weights) {
  if (!doc.is_object()) fail(ErrorKind::config, "manifest must be a JSON object");
  reject_unknown(doc,
                 {"suite", "algorithms", "weights", "epochs", "batch", "seeds", "reference_epochs",
                  "reference_algorithms", "compare", "output_dir", "workers", "simulations"},
                 "manifest");
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path.string() : (fs::path(base_dir) / path).string();
  };

  ExperimentManifest m;
  try {
    if (!doc.contains("suite")) fail(ErrorKind::config, "manifest needs a suite");
    m.objectives = parse_suite(doc["suite"]);
    const std::string shared_weights =
        doc.contains("weights") ? resolve(doc["weights"].get<std::string>()) : default_weights;

    if (!doc.contains("algorithms") || !doc["algorithms"].is_array() || doc["algorithms"].empty())
      fail(ErrorKind::config, "manifest needs a nonempty algorithm list");
    for (const auto& a : doc["algorithms"]) {
      std::string name, label, weights;
      if (a.is_string()) {
        name = a.get<std::string>();
      } else if (a.is_object()) {
        reject_unknown(a, {"label", "selector", "weights"}, "algorithm");
        name = a.at("selector").get<std::string>();
        label = a.value("label", "");
        if (a.contains("weights")) weights = resolve(a["weights"].get<std::string>());
      } else {
        fail(ErrorKind::config, "algorithm entries are names or objects");
      }
      auto sel = parse_selector(name);
      if (!sel) fail(ErrorKind::config, "unknown selector \"" + name + "\"");
      AlgorithmEntry entry{label.empty() ? sel->name() : label, *sel, ""};
      if (sel->kind == SelectorKind::hpfso) {
        entry.weights_path = weights.empty() ? shared_weights : weights;
        entry.selector.weights = load_weight_file(entry.weights_path).weights;
      } else if (!weights.empty()) {
        fail(ErrorKind::config, "weights given for non-HPFSO algorithm " + entry.label);
      }
      for (const auto& other : m.algorithms)
        if (other.label == entry.label) fail(ErrorKind::config, "duplicate algorithm label " + entry.label);
      m.algorithms.push_back(std::move(entry));
    }

    if (doc.contains("epochs")) m.epochs = one_or_many<int>(doc["epochs"]);
    if (m.epochs.empty()) fail(ErrorKind::config, "epoch grid is empty");
    for (int e : m.epochs)
      if (e < 1) fail(ErrorKind::config, "epoch counts must be positive");
    if (std::set<int>(m.epochs.begin(), m.epochs.end()).size() != m.epochs.size())
      fail(ErrorKind::config, "epoch grid has duplicates");
    m.batch = doc.value("batch", m.batch);
    if (m.batch < 1) fail(ErrorKind::config, "batch size must be positive");
    if (doc.contains("seeds")) m.seeds = one_or_many<std::uint64_t>(doc["seeds"]);
    if (m.seeds.empty()) fail(ErrorKind::config, "seed list is empty");
    if (doc.contains("reference_epochs")) {
      m.reference_epochs = doc["reference_epochs"].get<int>();
      if (std::find(m.epochs.begin(), m.epochs.end(), *m.reference_epochs) == m.epochs.end())
        fail(ErrorKind::config, "reference_epochs is not in the epoch grid");
    }
    auto known = [&](const std::string& label) {
      return std::any_of(m.algorithms.begin(), m.algorithms.end(),
                         [&](const AlgorithmEntry& e) { return e.label == label; });
    };
    if (doc.contains("reference_algorithms"))
      m.reference_algorithms = doc["reference_algorithms"].get<std::vector<std::string>>();
    for (const auto& r : m.reference_algorithms)
      if (!known(r)) fail(ErrorKind::config, "reference algorithm " + r + " is not in the list");
    if (doc.contains("compare")) m.comparisons = parse_pairs(doc["compare"]);
    for (const auto& [a, b] : m.comparisons)
      if (!known(a) || !known(b)) fail(ErrorKind::config, "comparison " + a + "/" + b + " names an unknown algorithm");
    m.output_dir = resolve(doc.value("output_dir", m.output_dir));
    m.workers = doc.value("workers", m.workers);
    m.simulations = doc.value("simulations", m.simulations);
    if (m.simulations < 1) fail(ErrorKind::config, "at least one simulation is required");
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("manifest: ") + e.what());
  }
  return m;
}

ExperimentManifest load_manifest(const std::string& path, const std::string& default_weights) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "manifest " + path + ": " + e.what());
  }
  return parse_manifest(doc, fs::path(path).parent_path().string(), default_weights);
}

// ---------------------------------------------------------------------------

const SummaryRow* Report::find(const std::string& algorithm, int e) const {
  for (const auto& r : summary)
    if (r.algorithm == algorithm && r.epochs == e) return &r;
  return nullptr;
}

Report build_report(const std::vector<RunResult>& results, const ReportConfig& config) {
  Report rep;
  if (config.algorithm_order.empty()) {
    for (const auto& r : results)
      if (std::find(rep.algorithms.begin(), rep.algorithms.end(), r.algorithm) == rep.algorithms.end())
        rep.algorithms.push_back(r.algorithm);
  } else {
    rep.algorithms = config.algorithm_order;
  }
  {
    std::set<int> e;
    for (const auto& r : results) e.insert(r.epochs);
    rep.epochs.assign(e.begin(), e.end());
  }
  if (config.reference_epochs) {
    rep.reference_epochs = *config.reference_epochs;
  } else if (!rep.epochs.empty()) {
    rep.reference_epochs =
        std::count(rep.epochs.begin(), rep.epochs.end(), 16) ? 16 : rep.epochs.back();
  }
  const std::set<std::string> reference(config.reference_algorithms.begin(),
                                        config.reference_algorithms.end());

  std::vector<std::string> objectives;
  std::map<std::string, std::vector<double>> ref_values;
  for (const auto& r : results) {
    const auto id = r.objective.id();
    if (!ref_values.count(id)) objectives.push_back(id);
    auto& v = ref_values[id];
    if (r.epochs == rep.reference_epochs && (reference.empty() || reference.count(r.algorithm)))
      v.push_back(r.best_value);
  }
  std::map<std::string, std::optional<NormalizationTransform>> transform;
  for (const auto& id : objectives) {
    transform[id] = reference_transform(ref_values[id]);
    if (!transform[id]) rep.degenerate_objectives.push_back(id);
  }

  for (const auto& r : results) {
    NormalizedRun n{r, std::nullopt};
    if (const auto& t = transform[r.objective.id()]) n.normalized = t->apply(r.best_value);
    rep.runs.push_back(std::move(n));
  }

  for (int e : rep.epochs) {
    const std::size_t first = rep.summary.size();
    for (const auto& alg : rep.algorithms) {
      SummaryRow row{alg, e};
      std::vector<double> values;
      for (const auto& n : rep.runs) {
        if (n.run.algorithm != alg || n.run.epochs != e) continue;
        ++row.runs;
        if (n.normalized) values.push_back(*n.normalized);
      }
      if (row.runs == 0) continue;
      row.normalized = values.size();
      row.mean = values.empty() ? kNaN : mean(values);
      row.std = values.empty() ? kNaN : sample_std(values);
      rep.summary.push_back(row);
    }
    const SummaryRow* best = nullptr;
    for (std::size_t i = first; i < rep.summary.size(); ++i)
      if (std::isfinite(rep.summary[i].mean) && (!best || rep.summary[i].mean < best->mean))
        best = &rep.summary[i];
    const double best_mean = best ? best->mean : kNaN, best_std = best ? best->std : kNaN;
    for (std::size_t i = first; i < rep.summary.size(); ++i) {
      auto& row = rep.summary[i];
      row.mean_ratio = best_mean != 0.0 ? row.mean / best_mean : kNaN;
      row.std_ratio = best_std != 0.0 ? row.std / best_std : kNaN;
    }
  }

  for (const auto& [a, b] : config.comparisons) {
    for (int e : rep.epochs) {
      std::map<std::pair<std::string, std::uint64_t>, double> va;
      for (const auto& n : rep.runs)
        if (n.run.algorithm == a && n.run.epochs == e && n.normalized)
          va[{n.run.objective.id(), n.run.seed}] = *n.normalized;
      std::vector<double> xa, xb;
      for (const auto& n : rep.runs) {
        if (n.run.algorithm != b || n.run.epochs != e || !n.normalized) continue;
        const auto it = va.find({n.run.objective.id(), n.run.seed});
        if (it == va.end()) continue;
        xa.push_back(it->second);
        xb.push_back(*n.normalized);
      }
      if (xa.empty()) continue;
      rep.comparisons.push_back({a, b, e, wilcoxon_signed_rank(xa, xb, Alternative::two_sided),
                                 wilcoxon_signed_rank(xa, xb, Alternative::less)});
    }
  }
  return rep;
}

void write_normalized_csv(std::ostream& out, const Report& report) {
  out << "objective,algorithm,epochs,seed,best_value,normalized\n";
  for (const auto& n : report.runs)
    out << n.run.objective.id() << ',' << n.run.algorithm << ',' << n.run.epochs << ','
        << n.run.seed << ',' << format_double(n.run.best_value) << ','
        << (n.normalized ? cell(*n.normalized) : "") << '\n';
}

void write_summary_csv(std::ostream& out, const Report& report) {
  out << "algorithm,epochs,runs,normalized,mean,std,mean_ratio,std_ratio\n";
  for (const auto& r : report.summary)
    out << r.algorithm << ',' << r.epochs << ',' << r.runs << ',' << r.normalized << ','
        << cell(r.mean) << ',' << cell(r.std) << ',' << cell(r.mean_ratio) << ','
        << cell(r.std_ratio) << '\n';
}

void write_summary_text(std::ostream& out, const Report& report) {
  std::size_t width = 10;
  for (const auto& a : report.algorithms) width = std::max(width, a.size() + 2);
  out << "reference epochs: " << report.reference_epochs << '\n';
  out << "degenerate objectives skipped: " << report.degenerate_objectives.size() << '\n';

  for (int e : report.epochs) {
    out << '\n' << "epochs = " << e << '\n';
    out << std::left << std::setw(11) << "";
    for (const auto& a : report.algorithms) out << std::right << std::setw(static_cast<int>(width)) << a;
    out << '\n';
    const std::pair<const char*, double SummaryRow::*> rows[] = {
        {"Mean", &SummaryRow::mean},
        {"Std", &SummaryRow::std},
        {"Mean/Best", &SummaryRow::mean_ratio},
        {"Std/Best", &SummaryRow::std_ratio}};
    for (const auto& [title, field] : rows) {
      out << std::left << std::setw(11) << title;
      for (const auto& a : report.algorithms) {
        const auto* r = report.find(a, e);
        out << std::right << std::setw(static_cast<int>(width)) << (r ? fixed3(r->*field) : "-");
      }
      out << '\n';
    }
  }

  if (report.epochs.size() > 1) {
    out << '\n' << "by epoch count (Mean / Std)" << '\n';
    out << std::left << std::setw(static_cast<int>(width)) << "Algorithm";
    for (int e : report.epochs) out << std::right << std::setw(18) << (std::to_string(e) + " epochs");
    out << '\n';
    for (const auto& a : report.algorithms) {
      out << std::left << std::setw(static_cast<int>(width)) << a;
      for (int e : report.epochs) {
        const auto* r = report.find(a, e);
        const std::string v = r ? fixed3(r->mean) + " / " + fixed3(r->std) : "-";
        out << std::right << std::setw(18) << v;
      }
      out << '\n';
    }
  }

  if (!report.comparisons.empty()) {
    out << '\n' << "Wilcoxon signed-rank (normalized cost, paired by objective and seed)" << '\n';
    for (const auto& c : report.comparisons) {
      out << c.a << " vs " << c.b << " @ " << c.epochs << " epochs: n=" << c.two_sided.n
          << " W+=" << format_double(c.two_sided.w_plus)
          << " p(two-sided)=" << format_double(c.two_sided.p_value)
          << " p(" << c.a << " < " << c.b << ")=" << format_double(c.less.p_value)
          << (c.two_sided.exact ? " exact" : " normal");
      if (c.two_sided.all_zero) out << " [all differences zero]";
      else if (c.two_sided.small_sample) out << " [fewer than 6 nonzero differences]";
      out << '\n';
    }
  }
}

void write_comparisons_csv(std::ostream& out, const Report& report) {
  out << "a,b,epochs,n,w_plus,w_minus,exact,p_two_sided,p_less,all_zero,small_sample\n";
  for (const auto& c : report.comparisons)
    out << c.a << ',' << c.b << ',' << c.epochs << ',' << c.two_sided.n << ','
        << format_double(c.two_sided.w_plus) << ',' << format_double(c.two_sided.w_minus) << ','
        << (c.two_sided.exact ? 1 : 0) << ',' << format_double(c.two_sided.p_value) << ','
        << format_double(c.less.p_value) << ',' << (c.two_sided.all_zero ? 1 : 0) << ','
        << (c.two_sided.small_sample ? 1 : 0) << '\n';
}

void write_report_files(const std::string& dir, const Report& report) {
  make_dir(dir);
  const fs::path d(dir);
  write_file_atomic(d / "normalized.csv", [&](std::ostream& o) { write_normalized_csv(o, report); });
  write_file_atomic(d / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, report); });
  write_file_atomic(d / "summary.txt", [&](std::ostream& o) { write_summary_text(o, report); });
  write_file_atomic(d / "wilcoxon.csv", [&](std::ostream& o) { write_comparisons_csv(o, report); });
}

void write_generator_counts_csv(std::ostream& out, const std::vector<GeneratorCounts>& counts) {
  out << "algorithm,epochs,epoch";
  for (GeneratorId g : kAllGenerators) out << ',' << generator_name(g);
  out << '\n';
  for (const auto& c : counts)
    for (std::size_t e = 0; e < c.per_epoch.size(); ++e) {
      out << c.algorithm << ',' << c.epochs << ',' << e + 1;
      for (long n : c.per_epoch[e]) out << ',' << n;
      out << '\n';
    }
}

// ---------------------------------------------------------------------------

SingleRun run_single(const ObjectiveSpec& spec, const Selector& selector, int epochs, int batch,
                     std::uint64_t seed, std::size_t workers, std::size_t simulations,
                     const std::string& label) {
  OptimizerConfig cfg;
  cfg.epochs = epochs;
  cfg.batch = batch;
  cfg.selector = selector;
  cfg.seed = paired_run_seed(seed, spec);
  cfg.workers = workers;
  cfg.simulations = simulations;
  SingleRun out;
  out.outcome = run_optimization(*make_objective(spec), cfg);
  out.result = {spec,       label.empty() ? selector.name() : label,
                out.outcome.best_value, out.outcome.evaluations,
                epochs,     batch, seed};
  return out;
}

BenchOutcome run_bench(const ExperimentManifest& m, std::ostream* log) {
  struct Task {
    std::size_t objective, epochs, algorithm, seed;
  };
  std::vector<Task> tasks;
  for (std::size_t o = 0; o < m.objectives.size(); ++o)
    for (std::size_t e = 0; e < m.epochs.size(); ++e)
      for (std::size_t a = 0; a < m.algorithms.size(); ++a)
        for (std::size_t s = 0; s < m.seeds.size(); ++s) tasks.push_back({o, e, a, s});

  make_dir(m.output_dir);
  std::vector<std::optional<SingleRun>> runs(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::mutex log_mutex;
  std::size_t done = 0;
  parallel_for(tasks.size(), worker_count(m.workers), [&](std::size_t i) {
    const auto& t = tasks[i];
    const auto& alg = m.algorithms[t.algorithm];
    try {
      runs[i] = run_single(m.objectives[t.objective], alg.selector, m.epochs[t.epochs], m.batch,
                           m.seeds[t.seed], 1, m.simulations, alg.label);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
    if (log) {
      std::lock_guard lock(log_mutex);
      ++done;
      *log << "[" << done << "/" << tasks.size() << "] " << m.objectives[t.objective].id() << ' '
           << alg.label << " epochs=" << m.epochs[t.epochs] << " seed=" << m.seeds[t.seed];
      if (runs[i]) *log << " best=" << format_double(runs[i]->result.best_value) << '\n';
      else *log << " FAILED: " << errors[i] << '\n';
    }
  });

  BenchOutcome out;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> count_index;
  for (std::size_t e = 0; e < m.epochs.size(); ++e)
    for (std::size_t a = 0; a < m.algorithms.size(); ++a) {
      count_index[{a, e}] = out.counts.size();
      out.counts.push_back({m.algorithms[a].label, m.epochs[e],
                            std::vector<std::array<long, kGeneratorCount>>(
                                static_cast<std::size_t>(m.epochs[e]))});
    }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    if (!runs[i]) {
      out.failures.push_back(m.objectives[t.objective].id() + "/" + m.algorithms[t.algorithm].label +
                             "/" + std::to_string(m.epochs[t.epochs]) + "/" +
                             std::to_string(m.seeds[t.seed]) + ": " + errors[i]);
      continue;
    }
    out.results.push_back(runs[i]->result);
    auto& per_epoch = out.counts[count_index[{t.algorithm, t.epochs}]].per_epoch;
    for (const auto& tr : runs[i]->outcome.trace) {
      if (tr.epoch < 1 || static_cast<std::size_t>(tr.epoch) > per_epoch.size()) continue;
      for (std::size_t g = 0; g < kGeneratorCount; ++g) per_epoch[tr.epoch - 1][g] += tr.counts[g];
    }
  }

  ReportConfig rc;
  rc.reference_epochs = m.reference_epochs;
  rc.reference_algorithms = m.reference_algorithms;
  for (const auto& a : m.algorithms) rc.algorithm_order.push_back(a.label);
  rc.comparisons = m.comparisons;
  if (rc.comparisons.empty())
    for (std::size_t a = 1; a < m.algorithms.size(); ++a)
      rc.comparisons.emplace_back(m.algorithms[0].label, m.algorithms[a].label);
  out.report = build_report(out.results, rc);

  const fs::path d(m.output_dir);
  write_file_atomic(d / "results.csv", [&](std::ostream& o) { write_run_results_csv(o, out.results); });
  write_file_atomic(d / "generator_counts.csv",
                    [&](std::ostream& o) { write_generator_counts_csv(o, out.counts); });
  write_file_atomic(d / "failures.txt", [&](std::ostream& o) {
    for (const auto& f : out.failures) o << f << '\n';
  });
  write_report_files(m.output_dir, out.report);
  if (log && !out.failures.empty()) *log << out.failures.size() << " runs failed; see failures.txt\n";
  return out;
}

// ---------------------------------------------------------------------------

TunerConfig parse_tuner_config(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::config, "tuner config must be a JSON object");
  reject_unknown(doc,
                 {"population", "generations", "seed", "mutation_std", "mutation_rate",
                  "crossover_rate", "lower", "upper", "train", "seeds", "epochs", "batch",
                  "simulations", "workers"},
                 "tuner config");
  TunerConfig c;
  try {
    c.population = doc.value("population", c.population);
    c.generations = doc.value("generations", c.generations);
    c.seed = doc.value("seed", c.seed);
    c.mutation_std = doc.value("mutation_std", c.mutation_std);
    c.mutation_rate = doc.value("mutation_rate", c.mutation_rate);
    c.crossover_rate = doc.value("crossover_rate", c.crossover_rate);
    for (auto [key, bound] : {std::pair{"lower", &c.lower}, std::pair{"upper", &c.upper}}) {
      if (!doc.contains(key)) continue;
      const auto& v = doc[key];
      if (v.is_number()) {
        bound->fill(v.get<double>());
      } else {
        const auto values = v.get<std::vector<double>>();
        if (values.size() != kFeatureCount)
          fail(ErrorKind::config, std::string(key) + " needs one bound or " +
                                      std::to_string(kFeatureCount) + " bounds");
        std::copy(values.begin(), values.end(), bound->begin());
      }
    }
    c.fitness.instances = parse_suite(doc.value("train", json("train")));
    if (doc.contains("seeds")) c.fitness.seeds = one_or_many<std::uint64_t>(doc["seeds"]);
    c.fitness.epochs = doc.value("epochs", c.fitness.epochs);
    c.fitness.batch = doc.value("batch", c.fitness.batch);
    c.fitness.simulations = doc.value("simulations", c.fitness.simulations);
    c.fitness.workers = doc.value("workers", c.fitness.workers);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("tuner config: ") + e.what());
  }
  if (c.fitness.seeds.empty()) fail(ErrorKind::config, "tuner needs at least one seed");
  if (c.fitness.epochs < 1 || c.fitness.batch < 1)
    fail(ErrorKind::config, "epochs and batch must be positive");
  c.validate();
  return c;
}

TunerResult run_tune_job(const TunerConfig& config, const std::string& output_dir, std::ostream* log) {
  config.validate();
  make_dir(output_dir);
  const fs::path d(output_dir);
  WeightProvenance prov;
  prov.tuner_seed = config.seed;
  for (const auto& s : config.fitness.instances) prov.train_ids.push_back(s.id());

  FitnessEvaluator evaluator(config.fitness);
  if (const std::size_t bad = evaluator.degenerate_instances(); bad && log)
    *log << bad << " degenerate training instances skipped\n";

  auto save = [&](const fs::path& path, const WeightVector& w, std::size_t generation) {
    WeightProvenance p = prov;
    p.generations = generation;
    write_file_atomic(path, [&](std::ostream& o) { write_weight_file(o, w, p); });
  };
  auto on_generation = [&](std::size_t g, const TunerResult& r) {
    write_file_atomic(d / "trajectory.csv", [&](std::ostream& o) {
      o << "generation,fitness\n";
      for (std::size_t i = 0; i < r.trajectory.size(); ++i)
        o << i + 1 << ',' << format_double(r.trajectory[i]) << '\n';
    });
    save(d / "weights_latest.json", r.best(), g);
    if (g == 5 || g == 10 || g == config.generations)
      save(d / ("weights_gen" + std::to_string(g) + ".json"), r.best(), g);
    if (log)
      *log << "generation " << g << "/" << config.generations
           << " incumbent fitness " << format_double(r.trajectory.back()) << " (" << r.evaluations
           << " weight vectors evaluated)\n";
  };
  auto result = tune(
      config, [&](const std::vector<WeightVector>& ws) { return evaluator.fitness(ws); },
      on_generation);
  save(d / "weights.json", result.best(), config.generations);
  return result;
}

}  // namespace fewshot
