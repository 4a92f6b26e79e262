#ifndef FEWSHOT_FEWSHOT_H
#define FEWSHOT_FEWSHOT_H

#include <stddef.h>
#include <stdint.h>

#if defined(FEWSHOT_BUILDING_LIBRARY)
#define FS_API __attribute__((visibility("default")))
#else
#define FS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fs_status {
  FS_OK = 0,
  FS_ERR_CONTRACT = 1, /* bad argument or misuse of a handle */
  FS_ERR_CONFIG = 2,   /* invalid configuration */
  FS_ERR_IO = 3,       /* input file missing or unreadable */
  FS_ERR_FORMAT = 4,   /* malformed file or layout version mismatch */
  FS_ERR_RUNTIME = 5,  /* failure while running */
} fs_status;

typedef struct fs_objective fs_objective;
typedef struct fs_weights fs_weights;
typedef struct fs_run fs_run;

/* Message of the last failed call on this thread; "" if none. */
FS_API const char* fs_last_error(void);
FS_API const char* fs_version(void);
FS_API size_t fs_feature_count(void);
FS_API const char* fs_feature_layout_version(void);
/* Path of the tuned weight file compiled into the library. */
FS_API const char* fs_default_weights_path(void);

/* ---- objectives ---- */

/* Suite objective by id, e.g. "rastrigin-d5-i3". */
FS_API fs_status fs_objective_from_id(const char* id, fs_objective** out);

/* Returns 0 on success and writes the value; anything else fails the run.
 * Called concurrently when more than one worker is used. */
typedef int (*fs_eval_fn)(const double* x, size_t dim, double* value, void* user);

FS_API fs_status fs_objective_from_callback(size_t dim, const double* lower, const double* upper,
                                            fs_eval_fn fn, void* user, fs_objective** out);
FS_API fs_status fs_objective_evaluate(const fs_objective* objective, const double* x, size_t dim,
                                       double* value);
FS_API size_t fs_objective_dim(const fs_objective* objective);
FS_API void fs_objective_free(fs_objective* objective);

/* ---- weights ---- */

FS_API fs_status fs_weights_load(const char* path, fs_weights** out);
FS_API fs_status fs_weights_from_array(const double* values, size_t n, fs_weights** out);
FS_API fs_status fs_weights_get(const fs_weights* weights, double* out, size_t n);
FS_API fs_status fs_weights_save(const fs_weights* weights, const char* path);
FS_API void fs_weights_free(fs_weights* weights);

/* ---- single runs ---- */

typedef struct fs_run_options {
  const fs_objective* objective;
  const char* selector;       /* HPFSO, RAND, BPM, DE or a generator name */
  const fs_weights* weights;  /* HPFSO only */
  int epochs;
  int batch;
  uint64_t seed;
  size_t workers;
  size_t simulations;
} fs_run_options;

/* Defaults: HPFSO, 16 epochs of 8, seed 0, one worker, 100 simulations. */
FS_API void fs_run_options_init(fs_run_options* options);

FS_API fs_status fs_optimize(const fs_run_options* options, fs_run** out);
FS_API fs_status fs_run_best(const fs_run* run, double* value, int* evaluations);
/* `point` receives fs_objective_dim() coordinates. */
FS_API fs_status fs_run_best_point(const fs_run* run, double* point, size_t dim);
/* One result row; suite objectives only. */
FS_API fs_status fs_run_write_csv(const fs_run* run, const char* path);
FS_API fs_status fs_run_write_trace(const fs_run* run, const char* path);
FS_API void fs_run_free(fs_run* run);

/* ---- experiments ---- */

/* Runs a benchmark manifest. output_dir may be NULL (use the manifest's);
 * workers 0 keeps the manifest's. Progress goes to stderr when verbose. */
FS_API fs_status fs_bench_run_manifest(const char* manifest_path, const char* output_dir,
                                       size_t workers, int verbose);

/* Tunes weights from a JSON configuration text. */
FS_API fs_status fs_tune_run(const char* config_json, const char* output_dir, int verbose);

/* Rebuilds the report files from a results CSV. options_json may be NULL or
 * hold reference_epochs, reference_algorithms, algorithms and compare. */
FS_API fs_status fs_report(const char* results_csv, const char* output_dir, const char* options_json);

typedef enum fs_alternative {
  FS_TWO_SIDED = 0,
  FS_GREATER = 1,
  FS_LESS = 2,
} fs_alternative;

typedef struct fs_wilcoxon_result {
  double p_value;
  double w_plus;
  double w_minus;
  size_t n;
  int exact;
  int all_zero;
  int small_sample;
} fs_wilcoxon_result;

FS_API fs_status fs_wilcoxon(const double* a, const double* b, size_t n, fs_alternative alternative,
                             fs_wilcoxon_result* out);

#ifdef __cplusplus
}
#endif

#endif
