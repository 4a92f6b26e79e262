// fewshot: run, bench, tune and report from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fewshot/fewshot.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int report_status(fs_status s) {
  if (s == FS_OK) return kExitOk;
  std::cerr << "fewshot: " << fs_last_error() << '\n';
  return s == FS_ERR_RUNTIME ? kExitRuntime : kExitUsage;
}

size_t env_workers(size_t flag) {
  if (const char* env = std::getenv("FEWSHOT_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<size_t>(v);
  }
  return flag;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct RunArgs {
  std::string objective, selector = "HPFSO", weights, out;
  int epochs = 16, batch = 8;
  uint64_t seed = 0;
  size_t workers = 1, simulations = 100;
};

int cmd_run(const RunArgs& a) {
  fs_objective* obj = nullptr;
  if (auto s = fs_objective_from_id(a.objective.c_str(), &obj)) return report_status(s);
  fs_weights* w = nullptr;
  const bool needs_weights = a.selector == "HPFSO" || a.selector == "hpfso";
  if (needs_weights || !a.weights.empty()) {
    const std::string path = a.weights.empty() ? fs_default_weights_path() : a.weights;
    if (auto s = fs_weights_load(path.c_str(), &w)) {
      fs_objective_free(obj);
      return report_status(s);
    }
  }
  fs_run_options o;
  fs_run_options_init(&o);
  o.objective = obj;
  o.selector = a.selector.c_str();
  o.weights = w;
  o.epochs = a.epochs;
  o.batch = a.batch;
  o.seed = a.seed;
  o.workers = env_workers(a.workers);
  o.simulations = a.simulations;
  fs_run* run = nullptr;
  fs_status s = fs_optimize(&o, &run);
  if (s == FS_OK) {
    std::error_code ec;
    std::filesystem::create_directories(a.out, ec);
    const std::string csv = (std::filesystem::path(a.out) / "result.csv").string();
    const std::string trace = (std::filesystem::path(a.out) / "trace.json").string();
    s = fs_run_write_csv(run, csv.c_str());
    if (s == FS_OK) s = fs_run_write_trace(run, trace.c_str());
    if (s == FS_OK) {
      double best = 0.0;
      int evals = 0;
      fs_run_best(run, &best, &evals);
      std::printf("%s best=%.17g evals=%d\n", a.objective.c_str(), best, evals);
    }
  }
  fs_run_free(run);
  fs_weights_free(w);
  fs_objective_free(obj);
  return report_status(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot parallel black-box optimization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fs_version()));

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Optimize one suite objective");
  run_cmd->add_option("--objective", run.objective, "Objective id, e.g. rastrigin-d5-i3")->required();
  run_cmd->add_option("--selector", run.selector, "HPFSO, RAND, BPM, DE or a generator name")
      ->capture_default_str();
  run_cmd->add_option("--weights", run.weights, "Weight file (HPFSO); default: shipped weights");
  run_cmd->add_option("--epochs", run.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--batch", run.batch)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", run.seed)->capture_default_str();
  run_cmd->add_option("--workers", run.workers)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--simulations", run.simulations)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", run.out, "Output directory (result.csv, trace.json)")->required();

  std::string manifest, bench_out;
  size_t bench_workers = 0;
  bool bench_quiet = false;
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark manifest");
  bench_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();
  bench_cmd->add_option("--out", bench_out, "Output directory (overrides the manifest)");
  bench_cmd->add_option("--workers", bench_workers, "Worker count (overrides the manifest)");
  bench_cmd->add_flag("--quiet", bench_quiet, "No progress output");

  std::string tune_config, tune_out, tune_train, tune_seeds;
  std::optional<uint64_t> tune_seed;
  std::optional<size_t> tune_population, tune_generations, tune_workers;
  std::optional<int> tune_epochs, tune_batch;
  bool tune_quiet = false;
  auto* tune_cmd = app.add_subcommand("tune", "Tune the scoring weights");
  tune_cmd->add_option("--config", tune_config, "Tuner config JSON");
  tune_cmd->add_option("--out", tune_out, "Output directory")->required();
  tune_cmd->add_option("--seed", tune_seed);
  tune_cmd->add_option("--population", tune_population);
  tune_cmd->add_option("--generations", tune_generations);
  tune_cmd->add_option("--train", tune_train, "train, test, desk or comma-separated ids");
  tune_cmd->add_option("--seeds", tune_seeds, "Comma-separated paired seeds");
  tune_cmd->add_option("--epochs", tune_epochs);
  tune_cmd->add_option("--batch", tune_batch);
  tune_cmd->add_option("--workers", tune_workers);
  tune_cmd->add_flag("--quiet", tune_quiet);

  std::string results, report_out, reference, algorithms;
  std::optional<int> reference_epochs;
  std::vector<std::string> compare;
  auto* report_cmd = app.add_subcommand("report", "Normalize and summarize a results CSV");
  report_cmd->add_option("--results", results, "results.csv")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "Output directory")->required();
  report_cmd->add_option("--reference-epochs", reference_epochs);
  report_cmd->add_option("--reference", reference, "Comma-separated reference algorithms");
  report_cmd->add_option("--algorithms", algorithms, "Comma-separated column order");
  report_cmd->add_option("--compare", compare, "A:B pairs for the Wilcoxon test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);

    if (*bench_cmd)
      return report_status(fs_bench_run_manifest(manifest.c_str(),
                                                 bench_out.empty() ? nullptr : bench_out.c_str(),
                                                 env_workers(bench_workers), !bench_quiet));

    if (*tune_cmd) {
      nlohmann::json cfg = nlohmann::json::object();
      if (!tune_config.empty()) {
        std::ifstream in(tune_config);
        if (!in) {
          std::cerr << "fewshot: cannot open " << tune_config << '\n';
          return kExitUsage;
        }
        try {
          cfg = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          std::cerr << "fewshot: " << tune_config << ": " << e.what() << '\n';
          return kExitUsage;
        }
      }
      if (tune_seed) cfg["seed"] = *tune_seed;
      if (tune_population) cfg["population"] = *tune_population;
      if (tune_generations) cfg["generations"] = *tune_generations;
      if (tune_epochs) cfg["epochs"] = *tune_epochs;
      if (tune_batch) cfg["batch"] = *tune_batch;
      if (tune_workers) cfg["workers"] = *tune_workers;
      if (!tune_train.empty()) {
        const auto ids = split_list(tune_train);
        if (ids.size() == 1 && (ids[0] == "train" || ids[0] == "test" || ids[0] == "desk"))
          cfg["train"] = ids[0];
        else
          cfg["train"] = ids;
      }
      if (!tune_seeds.empty()) {
        std::vector<uint64_t> seeds;
        for (const auto& s : split_list(tune_seeds)) {
          try {
            seeds.push_back(std::stoull(s));
          } catch (const std::exception&) {
            std::cerr << "fewshot: bad seed " << s << '\n';
            return kExitUsage;
          }
        }
        cfg["seeds"] = seeds;
      }
      if (const size_t w = env_workers(0)) cfg["workers"] = w;
      return report_status(fs_tune_run(cfg.dump().c_str(), tune_out.c_str(), !tune_quiet));
    }

    if (*report_cmd) {
      nlohmann::json opts = nlohmann::json::object();
      if (reference_epochs) opts["reference_epochs"] = *reference_epochs;
      if (!reference.empty()) opts["reference_algorithms"] = split_list(reference);
      if (!algorithms.empty()) opts["algorithms"] = split_list(algorithms);
      if (!compare.empty()) {
        auto pairs = nlohmann::json::array();
        for (const auto& c : compare) {
          const auto colon = c.find(':');
          if (colon == std::string::npos) {
            std::cerr << "fewshot: --compare expects A:B, got " << c << '\n';
            return kExitUsage;
          }
          pairs.push_back({c.substr(0, colon), c.substr(colon + 1)});
        }
        opts["compare"] = pairs;
      }
      return report_status(fs_report(results.c_str(), report_out.c_str(), opts.dump().c_str()));
    }
  } catch (const std::exception& e) {
    std::cerr << "fewshot: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
