#ifndef SAFEKERNEL_H
#define SAFEKERNEL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SK_API __declspec(dllexport)
#else
#define SK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sk_status {
    SK_OK = 0,
    SK_INVALID_ARGUMENT = 1,
    SK_DIMENSION_MISMATCH = 2,
    SK_EMPTY_SET = 3,
    SK_EMPTY_KERNEL = 4,
    SK_SINGULAR_MATRIX = 5,
    SK_UNSUPPORTED_SUMMAND = 6,
    SK_DOMAIN_ERROR = 7,
    SK_RESOURCE_LIMIT = 8,
    SK_NO_MODELS_LEFT = 9,
    SK_MISSING_KERNEL = 10,
    SK_CONFIG_ERROR = 11,
    SK_IO_ERROR = 12,
    SK_INTERNAL_ERROR = 99
} sk_status;

typedef struct sk_problem sk_problem;
typedef struct sk_kernel sk_kernel;
typedef struct sk_scenario sk_scenario;
typedef struct sk_run sk_run;

/* Message of the last failing call on this thread; never NULL. */
SK_API const char* sk_last_error(void);
SK_API const char* sk_status_name(sk_status status);
SK_API const char* sk_version(void);

/* Kernel problem from a JSON config file. */
SK_API sk_status sk_problem_load(const char* path, sk_problem** out);
SK_API void sk_problem_free(sk_problem* problem);
SK_API size_t sk_problem_state_dim(const sk_problem* problem);
/* Hex SHA-256 of the resolved config; valid while the handle lives. */
SK_API const char* sk_problem_hash(const sk_problem* problem);

SK_API sk_status sk_kernel_compute(const sk_problem* problem, sk_kernel** out);
SK_API sk_status sk_kernel_load(const char* archive_dir, sk_kernel** out);
/* Writes the archive; `manifest_json` (may be NULL) is merged into the
   manifest. */
SK_API sk_status sk_kernel_save(const sk_kernel* kernel, const char* archive_dir, const char* manifest_json);
SK_API void sk_kernel_free(sk_kernel* kernel);

SK_API size_t sk_kernel_model_count(const sk_kernel* kernel);
/* Model id by index; NULL when out of range. */
SK_API const char* sk_kernel_model_id(const sk_kernel* kernel, size_t index);

typedef struct sk_kernel_summary {
    size_t rows;
    int empty;
    /* First empty step, or -1. */
    int empty_at;
    double chebyshev_radius;
} sk_kernel_summary;

/* `model_id` NULL selects the intersection. */
SK_API sk_status sk_kernel_summary_get(const sk_kernel* kernel, const char* model_id, sk_kernel_summary* out);
SK_API sk_status sk_kernel_bounds(const sk_kernel* kernel, const char* model_id, double* lower, double* upper,
                                  size_t dim);
SK_API sk_status sk_kernel_contains(const sk_kernel* kernel, const char* model_id, const double* x, size_t dim,
                                    int* inside);

typedef struct sk_oracle_report {
    size_t samples;
    size_t counterexamples;
    size_t oracle_cells;
    size_t covered_cells;
    double coverage;
    int subset;
    double grid;
    double seconds;
} sk_oracle_report;

/* Grid oracle comparison for a 1- or 2-state problem; grid <= 0 uses the
   config value. */
SK_API sk_status sk_oracle_run(const sk_problem* problem, double grid, sk_oracle_report* out);

SK_API sk_status sk_scenario_load(const char* path, sk_scenario** out);
SK_API void sk_scenario_free(sk_scenario* scenario);
SK_API sk_status sk_scenario_set_mode(sk_scenario* scenario, const char* mode);
SK_API void sk_scenario_set_seed(sk_scenario* scenario, uint64_t seed);
/* Kernel archive named by the scenario file, or NULL. */
SK_API const char* sk_scenario_kernel_archive(const sk_scenario* scenario);

typedef struct sk_metrics {
    char patient_id[64];
    int induction_completed;
    double induction_time_min;
    double doh_at_20min;
    double max_bp_drop_pct;
    double max_pk;
    double time_in_doh_40_60;
    size_t breaches;
    size_t falsified;
} sk_metrics;

/* Runs every listed true patient. `kernel` may be NULL, in which case kernels
   are computed. Output goes to <out_root>/run-<hash>. */
SK_API sk_status sk_simulate(const sk_scenario* scenario, const sk_kernel* kernel, const char* out_root,
                             sk_run** out);
SK_API void sk_run_free(sk_run* run);
SK_API size_t sk_run_patient_count(const sk_run* run);
SK_API sk_status sk_run_metrics(const sk_run* run, size_t index, sk_metrics* out);
SK_API const char* sk_run_directory(const sk_run* run);

#ifdef __cplusplus
}
#endif

#endif
