#ifndef EDNET_H
#define EDNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EdnAlgorithm {
  EDN_ALGORITHM_FW = 0,
  EDN_ALGORITHM_PGA = 1,
  EDN_ALGORITHM_MAX_SUM = 2,
  EDN_ALGORITHM_MAX_ALPHA = 3,
} EdnAlgorithm;

/**
 * Status codes returned by every fallible function.
 */
typedef enum EdnStatus {
  EDN_STATUS_OK = 0,
  EDN_STATUS_NULL_POINTER = 1,
  EDN_STATUS_INVALID_ARGUMENT = 2,
  EDN_STATUS_PARSE_ERROR = 3,
  EDN_STATUS_IO_ERROR = 4,
  EDN_STATUS_CONFIG_ERROR = 5,
  EDN_STATUS_SOLVER_ERROR = 6,
  EDN_STATUS_BUFFER_TOO_SMALL = 7,
  EDN_STATUS_PANIC = 8,
} EdnStatus;

/**
 * Opaque rate-vector handle.
 */
typedef struct EdnRates EdnRates;

/**
 * Opaque scenario handle.
 */
typedef struct EdnScenario EdnScenario;

/**
 * Solver settings. Fill with `edn_solver_params_default` and override.
 */
typedef struct EdnSolverParams {
  enum EdnAlgorithm algorithm;
  double delta;
  size_t samples;
  double trunc_mult;
  size_t utility_samples;
  uint64_t seed;
  size_t pga_iterations;
  double pga_step_scale;
  size_t projection_iterations;
  double alpha;
} EdnSolverParams;

typedef struct EdnScenarioCounts {
  size_t nodes;
  size_t edges;
  size_t sources;
  size_t learners;
  size_t features;
  size_t types;
  /**
   * Length of a rate vector for this scenario.
   */
  size_t num_vars;
} EdnScenarioCounts;

typedef struct EdnTheoryConstants {
  double lambda_max;
  double g_max;
  double lipschitz;
} EdnTheoryConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *edn_version(void);

/**
 * Message for the last failure on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *edn_last_error_message(void);

enum EdnStatus edn_solver_params_default(struct EdnSolverParams *out);

/**
 * Parses a materialized scenario document.
 */
enum EdnStatus edn_scenario_from_json(const char *json, struct EdnScenario **out);

enum EdnStatus edn_scenario_from_file(const char *path, struct EdnScenario **out);

/**
 * Samples a scenario from a JSON scenario config.
 */
enum EdnStatus edn_scenario_generate(const char *config_json, struct EdnScenario **out);

/**
 * Writes the scenario as JSON into `buf` (NUL-terminated). `needed`
 * receives the required size including the terminator.
 */
enum EdnStatus edn_scenario_to_json(const struct EdnScenario *scenario,
                                    char *buf,
                                    size_t len,
                                    size_t *needed);

void edn_scenario_free(struct EdnScenario *scenario);

enum EdnStatus edn_scenario_counts(const struct EdnScenario *scenario,
                                   struct EdnScenarioCounts *out);

/**
 * Runs a solver and returns the final allocation.
 */
enum EdnStatus edn_solve(const struct EdnScenario *scenario,
                         const struct EdnSolverParams *params,
                         struct EdnRates **out);

/**
 * Wraps caller-owned values as a rate vector for `scenario`.
 */
enum EdnStatus edn_rates_from_values(const struct EdnScenario *scenario,
                                     const double *values,
                                     size_t len,
                                     struct EdnRates **out);

void edn_rates_free(struct EdnRates *rates);

/**
 * Number of entries in the rate vector, or 0 for NULL.
 */
size_t edn_rates_len(const struct EdnRates *rates);

/**
 * Copies all rates (edge rates first, then learner rates) into `buf`.
 */
enum EdnStatus edn_rates_copy(const struct EdnRates *rates, double *buf, size_t len);

/**
 * Copies the delivery rates of one learner (one entry per feature).
 */
enum EdnStatus edn_rates_learner_copy(const struct EdnRates *rates,
                                      size_t learner,
                                      double *buf,
                                      size_t len);

/**
 * Monte Carlo utility estimate with its standard error.
 */
enum EdnStatus edn_estimate_utility(const struct EdnScenario *scenario,
                                    const struct EdnRates *rates,
                                    size_t samples,
                                    uint64_t seed,
                                    double *mean,
                                    double *std_error);

/**
 * Counts constraint violations larger than `tol`.
 */
enum EdnStatus edn_feasibility_violations(const struct EdnScenario *scenario,
                                          const struct EdnRates *rates,
                                          double tol,
                                          size_t *count);

enum EdnStatus edn_theory_constants(const struct EdnScenario *scenario,
                                    struct EdnTheoryConstants *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDNET_H */
