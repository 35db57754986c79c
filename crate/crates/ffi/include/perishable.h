#ifndef PERISHABLE_H
#define PERISHABLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2 to 7 match the command-line exit codes.
 */
typedef enum PerishableStatus {
  PERISHABLE_STATUS_OK = 0,
  /**
   * Invalid configuration or parameter.
   */
  PERISHABLE_STATUS_CONFIG = 2,
  /**
   * State space too large to enumerate.
   */
  PERISHABLE_STATUS_CAPACITY = 3,
  PERISHABLE_STATUS_DIVERGENCE = 4,
  PERISHABLE_STATUS_IO = 5,
  /**
   * Malformed file or fingerprint mismatch.
   */
  PERISHABLE_STATUS_FORMAT = 6,
  /**
   * Index out of range or broken call contract.
   */
  PERISHABLE_STATUS_INDEX = 7,
  PERISHABLE_STATUS_NULL_ARGUMENT = 8,
  PERISHABLE_STATUS_INVALID_UTF8 = 9,
  PERISHABLE_STATUS_PANIC = 10,
} PerishableStatus;

/**
 * A configured scenario.
 */
typedef struct PerishableExperiment PerishableExperiment;

/**
 * Result of value iteration: the greedy policy and run statistics.
 */
typedef struct PerishableSolution PerishableSolution;

/**
 * Simulated return and KPIs. Per-product arrays use index 0 only for
 * single-product scenarios; percentages lie in [0, 100].
 */
typedef struct PerishableEvaluation {
  size_t n_rollouts;
  size_t n_products;
  double return_mean;
  double return_sd;
  double service_level_mean[2];
  double service_level_sd[2];
  double wastage_mean[2];
  double wastage_sd[2];
  double holding_mean[2];
  double holding_sd[2];
} PerishableEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *perishable_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *perishable_last_error(void);

/**
 * Sets the worker thread count. Only the first successful call has effect
 * and it must precede any solve or evaluation.
 */
enum PerishableStatus perishable_set_threads(size_t threads);

/**
 * Creates an experiment from a bundled preset such as "a/m2/exp1".
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PerishableStatus perishable_experiment_from_preset(const char *name,
                                                        struct PerishableExperiment **out);

/**
 * Creates an experiment from the text of a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PerishableStatus perishable_experiment_from_toml(const char *toml,
                                                      struct PerishableExperiment **out);

/**
 * # Safety
 * `exp` must come from a constructor above and not be used afterwards.
 * NULL is ignored.
 */
void perishable_experiment_free(struct PerishableExperiment *exp);

/**
 * Number of MDP states, saturating at UINT64_MAX.
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
enum PerishableStatus perishable_experiment_num_states(const struct PerishableExperiment *exp,
                                                       uint64_t *out);

/**
 * Number of heuristic parameters, or 0 for a NULL handle.
 *
 * # Safety
 * `exp` must be NULL or a live handle.
 */
size_t perishable_experiment_heuristic_dim(const struct PerishableExperiment *exp);

/**
 * Solves the MDP with the experiment's value-iteration settings.
 * `checkpoint_dir` may be NULL; `resume` continues from its newest
 * checkpoint.
 *
 * # Safety
 * `exp` must be a live handle, `checkpoint_dir` NULL or a NUL-terminated
 * string, and `out` a valid pointer.
 */
enum PerishableStatus perishable_solve(const struct PerishableExperiment *exp,
                                       const char *checkpoint_dir,
                                       bool resume,
                                       struct PerishableSolution **out);

/**
 * # Safety
 * `sol` must come from `perishable_solve` and not be used afterwards.
 * NULL is ignored.
 */
void perishable_solution_free(struct PerishableSolution *sol);

/**
 * Policy length (one action per state), or 0 for NULL.
 *
 * # Safety
 * `sol` must be NULL or a live handle.
 */
size_t perishable_solution_len(const struct PerishableSolution *sol);

/**
 * Sweeps performed, or 0 for NULL.
 *
 * # Safety
 * `sol` must be NULL or a live handle.
 */
uint64_t perishable_solution_iterations(const struct PerishableSolution *sol);

/**
 * Whether the stopping rule was met.
 *
 * # Safety
 * `sol` must be NULL or a live handle.
 */
bool perishable_solution_converged(const struct PerishableSolution *sol);

/**
 * Copies the action index of every state into `buf`, which must hold
 * exactly `perishable_solution_len` entries.
 *
 * # Safety
 * `sol` must be a live handle and `buf` valid for `len` writes.
 */
enum PerishableStatus perishable_solution_actions(const struct PerishableSolution *sol,
                                                  uint32_t *buf,
                                                  size_t len);

/**
 * Writes the policy as CSV, readable by the command line's `evaluate`.
 *
 * # Safety
 * Handles must be live and `path` a NUL-terminated string.
 */
enum PerishableStatus perishable_solution_write_csv(const struct PerishableExperiment *exp,
                                                    const struct PerishableSolution *sol,
                                                    const char *path);

/**
 * Simulates a solved policy. `n_rollouts` 0 uses the configured count.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum PerishableStatus perishable_evaluate_solution(const struct PerishableExperiment *exp,
                                                   const struct PerishableSolution *sol,
                                                   size_t n_rollouts,
                                                   uint64_t seed,
                                                   struct PerishableEvaluation *out);

/**
 * Simulates a policy CSV written for this experiment.
 *
 * # Safety
 * `exp` must be live, `path` a NUL-terminated string and `out` valid.
 */
enum PerishableStatus perishable_evaluate_policy_file(const struct PerishableExperiment *exp,
                                                      const char *path,
                                                      size_t n_rollouts,
                                                      uint64_t seed,
                                                      struct PerishableEvaluation *out);

/**
 * Simulates the scenario's heuristic with `len` parameters, in the order
 * reported by the command line's `simopt`.
 *
 * # Safety
 * `exp` must be live, `params` valid for `len` reads and `out` valid.
 */
enum PerishableStatus perishable_evaluate_heuristic(const struct PerishableExperiment *exp,
                                                    const size_t *params,
                                                    size_t len,
                                                    size_t n_rollouts,
                                                    uint64_t seed,
                                                    struct PerishableEvaluation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERISHABLE_H */
