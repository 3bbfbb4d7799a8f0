/* Risk-managed steady-state analysis: C interface.
 *
 * Every function returns an rmss_status. On failure the thread-local message from
 * rmss_last_error() describes what went wrong. Strings handed out through char** are
 * owned by the caller and released with rmss_string_free.
 */
#ifndef RMSS_RMSS_H
#define RMSS_RMSS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RMSS_API __declspec(dllexport)
#else
#define RMSS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rmss_status {
    RMSS_OK = 0,
    RMSS_ERR_PARSE = 1,
    RMSS_ERR_SCHEMA = 2,
    RMSS_ERR_TOPOLOGY = 3,
    RMSS_ERR_EMPTY_SELECTION = 4,
    RMSS_ERR_INVALID_ARGUMENT = 5,
    RMSS_ERR_PRECONDITION = 6,
    RMSS_ERR_UNKNOWN_BUS = 7,
    RMSS_ERR_NON_CONVERGENCE = 8,
    RMSS_ERR_JACOBIAN_SINGULAR = 9,
    RMSS_ERR_NOT_PSD = 10,
    RMSS_ERR_DEGENERATE_DIRECTION = 11,
    RMSS_ERR_ZERO_STEP = 12,
    RMSS_ERR_MODEL_EVALUATION = 13,
    RMSS_ERR_ALL_SAMPLES_FAILED = 14,
    RMSS_ERR_MISSING_LIMITS = 15,
    RMSS_ERR_DIMENSION_MISMATCH = 16,
    RMSS_ERR_IO = 17,
    RMSS_ERR_INTERNAL = 99
} rmss_status;

typedef struct rmss_case rmss_case;
typedef struct rmss_report rmss_report;
typedef struct rmss_mc_report rmss_mc_report;

typedef enum rmss_sigma_c_mode {
    RMSS_SIGMA_C_FRACTION = 0,   /* fraction of each metric's nominal value */
    RMSS_SIGMA_C_ABSOLUTE = 1,   /* pu */
    RMSS_SIGMA_C_LINEARIZED = 2  /* multiple of sqrt(lambda' Sigma lambda) */
} rmss_sigma_c_mode;

typedef enum rmss_ci_mode {
    RMSS_CI_PERCENTILE = 0,
    RMSS_CI_MEAN = 1
} rmss_ci_mode;

typedef struct rmss_config {
    /* Parameter model. A spread is a fraction of the dispatch when *_is_fraction, else pu. */
    int include_p;
    int include_q;
    double sigma_p;
    int sigma_p_is_fraction;
    double sigma_q;
    int sigma_q_is_fraction;
    const double* correlation; /* row-major d x d, or NULL for independent parameters */
    size_t correlation_dim;

    /* Metrics: bus voltage magnitudes. NULL selects every PQ bus with nonzero injection. */
    const int* metric_buses;
    size_t metric_count;

    /* Worst-case construction. */
    double rho;
    rmss_sigma_c_mode sigma_c_mode;
    const double* sigma_c; /* one known value or a strictly increasing sweep; NULL = default sweep */
    size_t sigma_c_count;
    double limit_band;     /* > 0: limits at vm * (1 -/+ band) instead of the case limits */
    double threshold;      /* adjoint/probe disagreement that flags a metric as nonlinear */
    int analysis_phase;

    /* Monte Carlo. */
    size_t samples;
    uint64_t seed;
    unsigned workers;
    rmss_ci_mode ci;
    int keep_samples;

    /* Newton solver. */
    double pf_tolerance;
    int pf_max_iter;
} rmss_config;

RMSS_API const char* rmss_version(void);
RMSS_API const char* rmss_status_string(rmss_status status);
/* Message of the last failure on the calling thread ("" if none). */
RMSS_API const char* rmss_last_error(void);

RMSS_API void rmss_config_init(rmss_config* config);

RMSS_API rmss_status rmss_case_load(const char* path, rmss_case** out);
RMSS_API rmss_status rmss_case_load_text(const char* text, const char* name, rmss_case** out);
/* "all", "all-solar", "all-wind", "all-renewable" or a comma list of component ids. */
RMSS_API rmss_status rmss_case_tag_essential(rmss_case* grid, const char* selector);
RMSS_API rmss_status rmss_case_validate_json(const rmss_case* grid, char** json);
RMSS_API rmss_status rmss_case_bus_count(const rmss_case* grid, size_t* count);
RMSS_API void rmss_case_free(rmss_case* grid);

RMSS_API rmss_status rmss_run(const rmss_case* grid, const rmss_config* config, rmss_report** out);
RMSS_API rmss_status rmss_report_json(const rmss_report* report, char** json);
RMSS_API rmss_status rmss_report_violations_csv(const rmss_report* report, char** csv);
RMSS_API rmss_status rmss_report_worst_violator_csv(const rmss_report* report, char** csv);
RMSS_API rmss_status rmss_report_sensitivity_csv(const rmss_report* report, char** csv);
RMSS_API rmss_status rmss_report_runtime(const rmss_report* report, double* seconds);
RMSS_API void rmss_report_free(rmss_report* report);

RMSS_API rmss_status rmss_run_mc(const rmss_case* grid, const rmss_config* config, rmss_mc_report** out);
RMSS_API rmss_status rmss_mc_report_json(const rmss_mc_report* report, char** json);
RMSS_API rmss_status rmss_mc_report_samples_csv(const rmss_mc_report* report, char** csv);
RMSS_API void rmss_mc_report_free(rmss_mc_report* report);

/* Hybrid sensitivities at the nominal operating point as CSV. */
RMSS_API rmss_status rmss_sensitivities_csv(const rmss_case* grid, const rmss_config* config, char** csv);

/* Compares serialized reports. table (may be NULL) receives a printable MAE summary. */
RMSS_API rmss_status rmss_compare_json(const char* rmss_json, const char* mc_json, char** comparison_json,
                                       char** table);

/* Reads a numeric CSV matrix (e.g. a correlation matrix). Release values with rmss_doubles_free. */
RMSS_API rmss_status rmss_matrix_csv_load(const char* path, double** values, size_t* rows, size_t* cols);

RMSS_API void rmss_string_free(char* s);
RMSS_API void rmss_doubles_free(double* values);

#ifdef __cplusplus
}
#endif

#endif
