#ifndef OPLGEN_H
#define OPLGEN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Score estimator selector for the C surface.
 */
typedef enum OplMethod {
  Dm = 0,
  Nipw = 1,
  Dr = 2,
} OplMethod;

/**
 * Policy class selector for the C surface.
 */
typedef enum OplPolicyKind {
  Logistic = 0,
  Linear = 1,
} OplPolicyKind;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum OplStatus {
  Ok = 0,
  /**
   * A required pointer was null.
   */
  NullPointer = 1,
  /**
   * Invalid argument or malformed input data.
   */
  InvalidArgument = 2,
  /**
   * Numerical failure (fitting or optimization).
   */
  NumericalFailure = 3,
} OplStatus;

/**
 * Opaque dataset handle.
 */
typedef struct OplDataset OplDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null when none occurred.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *oplgen_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *oplgen_version(void);

/**
 * Builds a dataset from row-major covariates.
 *
 * `behavior_probs` may be null when unknown. Returns a handle or null on
 * failure (check `oplgen_last_error_message`).
 *
 * # Safety
 * `covariates` must point to `n*d` doubles, `treatments` to `n` ints in
 * {0,1}, `outcomes` to `n` doubles, `behavior_probs` to `n` doubles or null.
 */
struct OplDataset *oplgen_dataset_from_arrays(const double *covariates,
                                              uintptr_t n,
                                              uintptr_t d,
                                              const int *treatments,
                                              const double *outcomes,
                                              const double *behavior_probs);

/**
 * Loads a dataset from a CSV file with the default schema (columns `t`,
 * `y`, optional `pb`; all other non-oracle columns are covariates).
 *
 * # Safety
 * `path` must be a valid NUL-terminated UTF-8 string.
 */
struct OplDataset *oplgen_dataset_load_csv(const char *path);

/**
 * Number of rows in a dataset handle.
 *
 * # Safety
 * `handle` must be a live pointer from a dataset constructor.
 */
uintptr_t oplgen_dataset_rows(const struct OplDataset *handle);

/**
 * Covariate dimension of a dataset handle.
 *
 * # Safety
 * `handle` must be a live pointer from a dataset constructor.
 */
uintptr_t oplgen_dataset_dim(const struct OplDataset *handle);

/**
 * Releases a dataset handle. Null is a no-op.
 *
 * # Safety
 * `handle` must come from a dataset constructor and not be freed twice.
 */
void oplgen_dataset_free(struct OplDataset *handle);

/**
 * Density-ratio box bounds for an odds-ratio bound `gamma` and selection
 * rate `p_sel`.
 *
 * # Safety
 * `out_l` and `out_u` must be valid writable pointers.
 */
enum OplStatus oplgen_bounds(double gamma, double p_sel, double *out_l, double *out_u);

/**
 * Closed-form worst-case Hajek value of `psi` over the density-ratio box.
 * `out_rn` (length n) receives the maximizing ratio vector when non-null.
 *
 * # Safety
 * `psi` must point to `n` doubles; `out_value` must be writable; `out_rn`
 * must be null or point to `n` writable doubles.
 */
enum OplStatus oplgen_worst_case_value(const double *psi,
                                       uintptr_t n,
                                       double gamma,
                                       double p_sel,
                                       double *out_value,
                                       uintptr_t *out_k_star,
                                       double *out_rn);

/**
 * Policy probability `pi(x; theta)` for the given class.
 *
 * # Safety
 * `theta` and `x` must point to `d` doubles; `out_prob` must be writable.
 */
enum OplStatus oplgen_policy_prob(enum OplPolicyKind kind,
                                  const double *theta,
                                  const double *x,
                                  uintptr_t d,
                                  double *out_prob);

/**
 * Fits one worst-case-optimal policy on a dataset handle.
 *
 * `p_sel` must lie in (0,1); pass the calibrated value when it came from
 * data. `behavior_known` selects whether recorded behavior probabilities
 * are used (nonzero) or a logistic model is fit. Writes `d` parameters into
 * `out_theta` and the in-sample worst-case value into `out_value`.
 *
 * # Safety
 * `handle` must be live; `out_theta` must point to `d` writable doubles;
 * `out_value` must be writable or null.
 */
enum OplStatus oplgen_fit(const struct OplDataset *handle,
                          enum OplMethod method,
                          enum OplPolicyKind kind,
                          double gamma,
                          double p_sel,
                          uint64_t seed,
                          int behavior_known,
                          double *out_theta,
                          double *out_value);

/**
 * Calibrates `(gamma, P(S=1))` from one shared covariate column.
 *
 * # Safety
 * `train_col` must point to `n` doubles and `target_col` to `m` doubles;
 * outputs must be writable.
 */
enum OplStatus oplgen_calibrate(const double *train_col,
                                uintptr_t n,
                                const double *target_col,
                                uintptr_t m,
                                double eta,
                                double *out_p_sel,
                                double *out_gamma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPLGEN_H */
