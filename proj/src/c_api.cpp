#include "fewshot/fewshot.h"

#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "fewshot/bench.hpp"
#include "fewshot/experiment.hpp"
#include "fewshot/optimizer.hpp"
#include "fewshot/parallel.hpp"
#include "fewshot/stats.hpp"
#include "fewshot/tuner.hpp"

#ifndef FEWSHOT_DEFAULT_WEIGHTS
#define FEWSHOT_DEFAULT_WEIGHTS "data/default_weights.json"
#endif

struct fs_objective {
  std::shared_ptr<const fewshot::BlackBox> box;
  std::optional<fewshot::ObjectiveSpec> spec;
};

struct fs_weights {
  fewshot::WeightVector w;
  fewshot::WeightProvenance provenance;
};

struct fs_run {
  std::optional<fewshot::ObjectiveSpec> spec;
  std::string algorithm;
  int epochs = 0;
  int batch = 0;
  std::uint64_t seed = 0;
  fewshot::RunOutcome outcome;
};

namespace {

thread_local std::string g_last_error;

fs_status status_of(fewshot::ErrorKind kind) {
  switch (kind) {
    case fewshot::ErrorKind::contract: return FS_ERR_CONTRACT;
    case fewshot::ErrorKind::config: return FS_ERR_CONFIG;
    case fewshot::ErrorKind::io: return FS_ERR_IO;
    case fewshot::ErrorKind::format: return FS_ERR_FORMAT;
    case fewshot::ErrorKind::runtime: return FS_ERR_RUNTIME;
  }
  return FS_ERR_RUNTIME;
}

template <class Fn>
fs_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return FS_OK;
  } catch (const fewshot::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FS_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FS_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return FS_ERR_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) fewshot::fail(fewshot::ErrorKind::contract, what);
}

class CallbackBlackBox final : public fewshot::BlackBox {
 public:
  CallbackBlackBox(fewshot::SearchSpace space, fs_eval_fn fn, void* user)
      : space_(std::move(space)), fn_(fn), user_(user) {}
  const fewshot::SearchSpace& space() const override { return space_; }
  double evaluate(const fewshot::Point& p) const override {
    double v = 0.0;
    if (fn_(p.coords.data(), p.coords.size(), &v, user_) != 0)
      fewshot::fail(fewshot::ErrorKind::runtime, "objective callback reported failure");
    return v;
  }
  std::string name() const override { return "callback"; }

 private:
  fewshot::SearchSpace space_;
  fs_eval_fn fn_;
  void* user_;
};

std::ofstream open_for_write(const char* path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fewshot::fail(fewshot::ErrorKind::runtime, std::string("cannot write ") + path);
  return out;
}

nlohmann::json parse_json_text(const char* text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fewshot::fail(fewshot::ErrorKind::config, std::string(what) + ": " + e.what());
  }
}

}  // namespace

extern "C" {

const char* fs_last_error(void) { return g_last_error.c_str(); }
const char* fs_version(void) { return "0.1.0"; }
size_t fs_feature_count(void) { return fewshot::kFeatureCount; }
const char* fs_feature_layout_version(void) { return fewshot::kFeatureLayoutVersion.data(); }
const char* fs_default_weights_path(void) { return FEWSHOT_DEFAULT_WEIGHTS; }

fs_status fs_objective_from_id(const char* id, fs_objective** out) {
  return guarded([&] {
    require(id && out, "fs_objective_from_id: null argument");
    const auto spec = fewshot::parse_objective_id(id);
    *out = new fs_objective{fewshot::make_objective(spec), spec};
  });
}

fs_status fs_objective_from_callback(size_t dim, const double* lower, const double* upper,
                                     fs_eval_fn fn, void* user, fs_objective** out) {
  return guarded([&] {
    require(dim > 0 && lower && upper && fn && out, "fs_objective_from_callback: bad argument");
    fewshot::SearchSpace space(std::vector<double>(lower, lower + dim),
                               std::vector<double>(upper, upper + dim));
    *out = new fs_objective{std::make_shared<CallbackBlackBox>(std::move(space), fn, user), std::nullopt};
  });
}

fs_status fs_objective_evaluate(const fs_objective* objective, const double* x, size_t dim,
                                double* value) {
  return guarded([&] {
    require(objective && x && value, "fs_objective_evaluate: null argument");
    require(dim == objective->box->space().dim(), "fs_objective_evaluate: dimension mismatch");
    *value = objective->box->evaluate(fewshot::Point{std::vector<double>(x, x + dim)});
  });
}

size_t fs_objective_dim(const fs_objective* objective) {
  return objective ? objective->box->space().dim() : 0;
}

void fs_objective_free(fs_objective* objective) { delete objective; }

fs_status fs_weights_load(const char* path, fs_weights** out) {
  return guarded([&] {
    require(path && out, "fs_weights_load: null argument");
    auto file = fewshot::load_weight_file(path);
    *out = new fs_weights{file.weights, std::move(file.provenance)};
  });
}

fs_status fs_weights_from_array(const double* values, size_t n, fs_weights** out) {
  return guarded([&] {
    require(values && out, "fs_weights_from_array: null argument");
    if (n != fewshot::kFeatureCount)
      fewshot::fail(fewshot::ErrorKind::contract, "weight vector needs " +
                                                    std::to_string(fewshot::kFeatureCount) + " values");
    auto* w = new fs_weights{};
    std::copy(values, values + n, w->w.values.begin());
    *out = w;
  });
}

fs_status fs_weights_get(const fs_weights* weights, double* out, size_t n) {
  return guarded([&] {
    require(weights && out, "fs_weights_get: null argument");
    require(n == fewshot::kFeatureCount, "fs_weights_get: wrong length");
    std::copy(weights->w.values.begin(), weights->w.values.end(), out);
  });
}

fs_status fs_weights_save(const fs_weights* weights, const char* path) {
  return guarded([&] {
    require(weights && path, "fs_weights_save: null argument");
    auto out = open_for_write(path);
    fewshot::write_weight_file(out, weights->w, weights->provenance);
  });
}

void fs_weights_free(fs_weights* weights) { delete weights; }

void fs_run_options_init(fs_run_options* options) {
  if (!options) return;
  *options = fs_run_options{nullptr, "HPFSO", nullptr, 16, 8, 0, 1, 100};
}

fs_status fs_optimize(const fs_run_options* o, fs_run** out) {
  return guarded([&] {
    require(o && out && o->objective && o->selector, "fs_optimize: null argument");
    auto sel = fewshot::parse_selector(o->selector);
    if (!sel) fewshot::fail(fewshot::ErrorKind::config, std::string("unknown selector ") + o->selector);
    if (sel->kind == fewshot::SelectorKind::hpfso) {
      if (!o->weights) fewshot::fail(fewshot::ErrorKind::config, "HPFSO needs a weight vector");
      sel->weights = o->weights->w;
    }
    auto run = std::make_unique<fs_run>();
    run->spec = o->objective->spec;
    run->algorithm = sel->name();
    run->epochs = o->epochs;
    run->batch = o->batch;
    run->seed = o->seed;
    if (run->spec) {
      run->outcome = fewshot::run_single(*run->spec, *sel, o->epochs, o->batch, o->seed,
                                         o->workers, o->simulations)
                         .outcome;
    } else {
      fewshot::OptimizerConfig cfg;
      cfg.epochs = o->epochs;
      cfg.batch = o->batch;
      cfg.selector = *sel;
      cfg.seed = o->seed;
      cfg.workers = o->workers;
      cfg.simulations = o->simulations;
      run->outcome = fewshot::run_optimization(*o->objective->box, cfg);
    }
    *out = run.release();
  });
}

fs_status fs_run_best(const fs_run* run, double* value, int* evaluations) {
  return guarded([&] {
    require(run, "fs_run_best: null run");
    if (value) *value = run->outcome.best_value;
    if (evaluations) *evaluations = run->outcome.evaluations;
  });
}

fs_status fs_run_best_point(const fs_run* run, double* point, size_t dim) {
  return guarded([&] {
    require(run && point, "fs_run_best_point: null argument");
    require(dim == run->outcome.best_point.coords.size(), "fs_run_best_point: dimension mismatch");
    std::copy(run->outcome.best_point.coords.begin(), run->outcome.best_point.coords.end(), point);
  });
}

fs_status fs_run_write_csv(const fs_run* run, const char* path) {
  return guarded([&] {
    require(run && path, "fs_run_write_csv: null argument");
    require(run->spec.has_value(), "fs_run_write_csv: only suite objectives have result rows");
    auto out = open_for_write(path);
    fewshot::write_run_results_csv(
        out, {{*run->spec, run->algorithm, run->outcome.best_value, run->outcome.evaluations,
               run->epochs, run->batch, run->seed}});
  });
}

fs_status fs_run_write_trace(const fs_run* run, const char* path) {
  return guarded([&] {
    require(run && path, "fs_run_write_trace: null argument");
    auto out = open_for_write(path);
    fewshot::write_trace_json(out, run->outcome.trace);
  });
}

void fs_run_free(fs_run* run) { delete run; }

fs_status fs_bench_run_manifest(const char* manifest_path, const char* output_dir, size_t workers,
                                int verbose) {
  return guarded([&] {
    require(manifest_path, "fs_bench_run_manifest: null manifest path");
    auto m = fewshot::load_manifest(manifest_path, FEWSHOT_DEFAULT_WEIGHTS);
    if (output_dir) m.output_dir = output_dir;
    if (workers) m.workers = workers;
    fewshot::run_bench(m, verbose ? &std::cerr : nullptr);
  });
}

fs_status fs_tune_run(const char* config_json, const char* output_dir, int verbose) {
  return guarded([&] {
    require(config_json && output_dir, "fs_tune_run: null argument");
    auto cfg = fewshot::parse_tuner_config(parse_json_text(config_json, "tuner config"));
    cfg.fitness.workers = fewshot::worker_count(cfg.fitness.workers);
    fewshot::run_tune_job(cfg, output_dir, verbose ? &std::cerr : nullptr);
  });
}

fs_status fs_report(const char* results_csv, const char* output_dir, const char* options_json) {
  return guarded([&] {
    require(results_csv && output_dir, "fs_report: null argument");
    std::ifstream in(results_csv, std::ios::binary);
    if (!in) fewshot::fail(fewshot::ErrorKind::io, std::string("cannot open ") + results_csv);
    const auto results = fewshot::read_run_results_csv(in);
    fewshot::ReportConfig rc;
    if (options_json) {
      const auto doc = parse_json_text(options_json, "report options");
      try {
        if (doc.contains("reference_epochs")) rc.reference_epochs = doc["reference_epochs"].get<int>();
        if (doc.contains("reference_algorithms"))
          rc.reference_algorithms = doc["reference_algorithms"].get<std::vector<std::string>>();
        if (doc.contains("algorithms"))
          rc.algorithm_order = doc["algorithms"].get<std::vector<std::string>>();
        if (doc.contains("compare"))
          for (const auto& p : doc["compare"]) rc.comparisons.emplace_back(p.at(0), p.at(1));
      } catch (const nlohmann::json::exception& e) {
        fewshot::fail(fewshot::ErrorKind::config, std::string("report options: ") + e.what());
      }
    }
    fewshot::write_report_files(output_dir, fewshot::build_report(results, rc));
  });
}

fs_status fs_wilcoxon(const double* a, const double* b, size_t n, fs_alternative alternative,
                      fs_wilcoxon_result* out) {
  return guarded([&] {
    require(out && (n == 0 || (a && b)), "fs_wilcoxon: null argument");
    fewshot::Alternative alt = fewshot::Alternative::two_sided;
    if (alternative == FS_GREATER) alt = fewshot::Alternative::greater;
    else if (alternative == FS_LESS) alt = fewshot::Alternative::less;
    else require(alternative == FS_TWO_SIDED, "fs_wilcoxon: unknown alternative");
    const auto r = fewshot::wilcoxon_signed_rank({a, n}, {b, n}, alt);
    *out = {r.p_value, r.w_plus, r.w_minus, r.n, r.exact, r.all_zero, r.small_sample};
  });
}

}  // extern "C"
