#ifndef COEVO_H
#define COEVO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  COEVO_STATUS_OK = 0,
  /**
   * The run has terminated; no row was produced.
   */
  COEVO_STATUS_FINISHED = 1,
  COEVO_STATUS_NULL_POINTER = 2,
  COEVO_STATUS_INVALID_ARGUMENT = 3,
  COEVO_STATUS_CONFIG = 4,
  COEVO_STATUS_EFFECT_SPEC = 5,
  COEVO_STATUS_IO = 6,
  COEVO_STATUS_PARSE = 7,
  COEVO_STATUS_OVERFLOW = 8,
  COEVO_STATUS_INTERNAL = 9,
} CoevoStatus;

typedef enum {
  COEVO_TERMINATION_KIND_RUNNING = 0,
  COEVO_TERMINATION_KIND_COMPLETED = 1,
  COEVO_TERMINATION_KIND_EXTINCT = 2,
  COEVO_TERMINATION_KIND_OVERFLOW = 3,
} CoevoTerminationKind;

typedef enum {
  COEVO_REGIME_COEVOLUTION = 0,
  COEVO_REGIME_POLICY_ONLY = 1,
  COEVO_REGIME_VIRUS_ONLY = 2,
} CoevoRegime;

typedef enum {
  COEVO_OFFSPRING_MODE_STOCHASTIC = 0,
  COEVO_OFFSPRING_MODE_EXPECTED = 1,
} CoevoOffspringMode;

/**
 * Opaque simulation handle.
 */
typedef struct CoevoSimulation CoevoSimulation;

/**
 * Scalar run parameters. Measure weights are not carried here; use
 * `coevo_simulation_from_files` for configs that set them.
 */
typedef struct {
  uint64_t virus_initial_population;
  uint32_t virus_size;
  uint32_t policy_population_size;
  uint32_t policy_size;
  double base_rate;
  uint32_t tmax;
  double policy_crossover_rate;
  double policy_mutation_rate;
  double virus_mutation_rate;
  /**
   * A `CoevoRegime` value.
   */
  uint32_t regime;
  /**
   * A `CoevoOffspringMode` value.
   */
  uint32_t mode;
  uint64_t population_cap;
  uint64_t seed;
} CoevoConfig;

typedef struct {
  uint32_t t;
  uint64_t total_viruses;
  uint64_t n_strains;
  double mean_virus_r;
  double mean_policy_reduction;
  double mean_effective_r;
  double freq_best_gene;
  bool has_mean_virus_r;
  bool has_mean_effective_r;
  bool has_freq_best_gene;
  bool extinct;
  bool overflowed;
} CoevoMetricsRow;

typedef struct {
  CoevoTerminationKind kind;
  /**
   * Period at which the run stopped; 0 while running.
   */
  uint32_t t;
} CoevoTermination;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *coevo_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *coevo_version(void);

/**
 * Fills `out` with the default parameters.
 *
 * # Safety
 * `out` must be NULL or point to writable storage for a `CoevoConfig`.
 */
CoevoStatus coevo_config_default(CoevoConfig *out);

/**
 * Reads a TOML config into `out`. Fails with `Config` if the file sets
 * measure weights, which `CoevoConfig` cannot hold.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to writable
 * storage for a `CoevoConfig`.
 */
CoevoStatus coevo_config_load(const char *path, CoevoConfig *out);

/**
 * Checks `config` without building a simulation.
 *
 * # Safety
 * `config` must be NULL or point to a valid `CoevoConfig`.
 */
CoevoStatus coevo_config_validate(const CoevoConfig *config);

/**
 * Builds a simulation. `effects_path` names an effect-interval CSV; NULL
 * selects the bundled synthetic spec.
 *
 * # Safety
 * `config` must point to a valid `CoevoConfig`, `effects_path` must be NULL
 * or NUL-terminated, and `out` must point to writable storage for a pointer.
 */
CoevoStatus coevo_simulation_new(const CoevoConfig *config,
                                 const char *effects_path,
                                 CoevoSimulation **out);

/**
 * Builds a simulation from `n_measures` effect intervals given as two
 * parallel arrays.
 *
 * # Safety
 * `config` must point to a valid `CoevoConfig`; `ci_low` and `ci_high`
 * must each point to `n_measures` readable doubles; `out` must point to
 * writable storage for a pointer.
 */
CoevoStatus coevo_simulation_new_with_intervals(const CoevoConfig *config,
                                                const double *ci_low,
                                                const double *ci_high,
                                                size_t n_measures,
                                                CoevoSimulation **out);

/**
 * Builds a simulation from a TOML config and an effect CSV. Either path may
 * be NULL to use the bundled default.
 *
 * # Safety
 * Both paths must be NULL or NUL-terminated; `out` must point to writable
 * storage for a pointer.
 */
CoevoStatus coevo_simulation_from_files(const char *config_path,
                                        const char *effects_path,
                                        CoevoSimulation **out);

/**
 * Releases a simulation. NULL is ignored.
 *
 * # Safety
 * `sim` must be NULL or a handle from a `coevo_simulation_*` constructor
 * that has not been freed.
 */
void coevo_simulation_free(CoevoSimulation *sim);

/**
 * Writes the effective parameters of `sim` into `out`.
 *
 * # Safety
 * `sim` must be a live handle; `out` must point to writable storage.
 */
CoevoStatus coevo_simulation_config(const CoevoSimulation *sim, CoevoConfig *out);

/**
 * Advances one period. On `Ok`, `row_out` (if not NULL) holds the row just
 * recorded. Returns `Finished` once the run has terminated.
 *
 * # Safety
 * `sim` must be a live handle; `row_out` must be NULL or writable.
 */
CoevoStatus coevo_simulation_step(CoevoSimulation *sim, CoevoMetricsRow *row_out);

/**
 * Steps until the run terminates.
 *
 * # Safety
 * `sim` must be a live handle.
 */
CoevoStatus coevo_simulation_run(CoevoSimulation *sim);

/**
 * Number of rows recorded so far, 0 for NULL.
 *
 * # Safety
 * `sim` must be NULL or a live handle.
 */
size_t coevo_simulation_row_count(const CoevoSimulation *sim);

/**
 * Copies row `index` into `out`.
 *
 * # Safety
 * `sim` must be a live handle; `out` must point to writable storage.
 */
CoevoStatus coevo_simulation_row(const CoevoSimulation *sim, size_t index, CoevoMetricsRow *out);

/**
 * How the run ended, or `Running`.
 *
 * # Safety
 * `sim` must be a live handle; `out` must point to writable storage.
 */
CoevoStatus coevo_simulation_termination(const CoevoSimulation *sim, CoevoTermination *out);

/**
 * Writes `metrics.csv` and `run.json` for a finished run into `dir`,
 * creating it if needed. Fails with `InvalidArgument` while running.
 *
 * # Safety
 * `sim` must be a live handle; `dir` must be NUL-terminated.
 */
CoevoStatus coevo_simulation_write(const CoevoSimulation *sim, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COEVO_H */
