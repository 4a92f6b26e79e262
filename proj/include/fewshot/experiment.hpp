#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fewshot/bench.hpp"
#include "fewshot/optimizer.hpp"
#include "fewshot/stats.hpp"
#include "fewshot/tuner.hpp"

#include <json.hpp>

namespace fewshot {

/// "train" / "test" (desk split), "desk" (all 600), or a list of ids.
std::vector<ObjectiveSpec> parse_suite(const nlohmann::json& suite);

struct AlgorithmEntry {
  std::string label;  // algorithm id in result files
  Selector selector;
  std::string weights_path;  // HPFSO only; resolved
};

struct ExperimentManifest {
  std::vector<ObjectiveSpec> objectives;
  std::vector<AlgorithmEntry> algorithms;
  std::vector<int> epochs = {16};
  int batch = 8;
  std::vector<std::uint64_t> seeds = {1};
  std::optional<int> reference_epochs;
  std::vector<std::string> reference_algorithms;  // empty: every algorithm
  std::vector<std::pair<std::string, std::string>> comparisons;
  std::string output_dir = "bench_out";
  std::size_t workers = 1;
  std::size_t simulations = 100;
};

/// Relative weight paths resolve against `base_dir`. Every weight file is
/// loaded and checked here. HPFSO entries without their own file use
/// `default_weights`.
ExperimentManifest parse_manifest(const nlohmann::json& doc, const std::string& base_dir,
                                  const std::string& default_weights);
ExperimentManifest load_manifest(const std::string& path, const std::string& default_weights);

struct ReportConfig {
  std::optional<int> reference_epochs;            // default: 16 if present, else the largest
  std::vector<std::string> reference_algorithms;  // empty: every algorithm
  std::vector<std::string> algorithm_order;       // empty: first appearance
  std::vector<std::pair<std::string, std::string>> comparisons;
};

struct SummaryRow {
  std::string algorithm;
  int epochs = 0;
  std::size_t runs = 0;
  std::size_t normalized = 0;  // runs on non-degenerate objectives
  double mean = 0.0;           // NaN when nothing was normalized
  double std = 0.0;
  double mean_ratio = 0.0;  // against the best mean at the same epoch count
  double std_ratio = 0.0;
};

struct ComparisonRow {
  std::string a, b;
  int epochs = 0;
  WilcoxonResult two_sided;
  WilcoxonResult less;  // A below B
};

struct NormalizedRun {
  RunResult run;
  std::optional<double> normalized;
};

struct Report {
  std::vector<std::string> algorithms;
  std::vector<int> epochs;
  int reference_epochs = 0;
  std::vector<NormalizedRun> runs;
  std::vector<SummaryRow> summary;
  std::vector<ComparisonRow> comparisons;
  std::vector<std::string> degenerate_objectives;

  const SummaryRow* find(const std::string& algorithm, int epochs) const;
};

/// Normalizes per objective against the reference runs at the reference
/// epoch count (all seeds pooled) and aggregates per algorithm and epochs.
Report build_report(const std::vector<RunResult>& results, const ReportConfig& config);

void write_normalized_csv(std::ostream& out, const Report& report);
void write_summary_csv(std::ostream& out, const Report& report);
/// A Mean/Std/ratio block per epoch count, plus a by-epoch block when there
/// are several counts.
void write_summary_text(std::ostream& out, const Report& report);
void write_comparisons_csv(std::ostream& out, const Report& report);
/// Writes normalized.csv, summary.csv, summary.txt and wilcoxon.csv.
void write_report_files(const std::string& dir, const Report& report);

struct GeneratorCounts {
  std::string algorithm;
  int epochs = 0;
  std::vector<std::array<long, kGeneratorCount>> per_epoch;  // summed over runs
};

void write_generator_counts_csv(std::ostream& out, const std::vector<GeneratorCounts>& counts);

struct BenchOutcome {
  std::vector<RunResult> results;
  std::vector<GeneratorCounts> counts;
  std::vector<std::string> failures;  // "objective/algorithm/epochs/seed: message"
  Report report;
};

/// Runs the full grid and writes results.csv, generator_counts.csv,
/// failures.txt and the report files into the manifest's output directory.
BenchOutcome run_bench(const ExperimentManifest& manifest, std::ostream* log = nullptr);

/// Keys: population, generations, seed, mutation_std, mutation_rate,
/// crossover_rate, lower, upper (number or 29 numbers), train, seeds, epochs,
/// batch, simulations, workers. Missing keys keep the defaults.
TunerConfig parse_tuner_config(const nlohmann::json& doc);

/// Tunes, writing trajectory.csv and weights_latest.json after every
/// generation, weights_gen<g>.json for g in {5, 10, G}, and weights.json at
/// the end.
TunerResult run_tune_job(const TunerConfig& config, const std::string& output_dir,
                         std::ostream* log = nullptr);

/// Single optimization run on a suite objective with the paired run seed.
struct SingleRun {
  RunResult result;
  RunOutcome outcome;
};
SingleRun run_single(const ObjectiveSpec& spec, const Selector& selector, int epochs, int batch,
                     std::uint64_t seed, std::size_t workers, std::size_t simulations,
                     const std::string& label = "");

}  // namespace fewshot
