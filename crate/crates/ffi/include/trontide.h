#ifndef TRONTIDE_H
#define TRONTIDE_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/*
 Result code of every fallible call.
 */
typedef enum TrontideStatus {
  TRONTIDE_STATUS_OK = 0,
  TRONTIDE_STATUS_NULL_POINTER = 1,
  TRONTIDE_STATUS_INVALID_UTF8 = 2,
  TRONTIDE_STATUS_CONFIG = 3,
  TRONTIDE_STATUS_INFEASIBLE = 4,
  TRONTIDE_STATUS_DOMAIN = 5,
  TRONTIDE_STATUS_NUMERIC = 6,
  TRONTIDE_STATUS_DIVERGENCE = 7,
  TRONTIDE_STATUS_SHAPE = 8,
  TRONTIDE_STATUS_UNSUPPORTED = 9,
  TRONTIDE_STATUS_IO = 10,
  TRONTIDE_STATUS_PANIC = 11,
} TrontideStatus;

/*
 Opaque handle to a built experiment.
 */
typedef struct TrontideExperiment TrontideExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *trontide_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *trontide_version(void);

/*
 Parses a JSON experiment config and builds it. `seed_override` may be null to use the
 config's seed.

 # Safety
 `json` must be a NUL-terminated string; `seed_override` null or valid; `out` writable.
 */
enum TrontideStatus trontide_experiment_new_from_json(const char *json,
                                                      const uint64_t *seed_override,
                                                      struct TrontideExperiment **out);

/*
 # Safety
 `exp` must come from [`trontide_experiment_new_from_json`] and not be used afterwards.
 */
void trontide_experiment_free(struct TrontideExperiment *exp);

/*
 # Safety
 `s` must come from this library and not be used afterwards.
 */
void trontide_string_free(char *s);

/*
 Theory report as JSON. Infeasible settings are reported in the JSON, not as an error.

 # Safety
 `exp` must be a live handle; `out` writable.
 */
enum TrontideStatus trontide_experiment_theory_json(const struct TrontideExperiment *exp,
                                                    char **out);

/*
 Trial summary as JSON; `trials == 0` uses the config's `R`.

 # Safety
 `exp` must be a live handle; `out` writable.
 */
enum TrontideStatus trontide_experiment_run_trials(const struct TrontideExperiment *exp,
                                                   uintptr_t trials,
                                                   char **out);

/*
 One training run as a `t,dist_sq,grad_norm` CSV trace.

 # Safety
 `exp` must be a live handle; `out` writable.
 */
enum TrontideStatus trontide_experiment_train_csv(const struct TrontideExperiment *exp, char **out);

/*
 ln Γ(x) for x > 0.

 # Safety
 `out` must be writable.
 */
enum TrontideStatus trontide_log_gamma(double x, double *out);

/*
 Closed-form trade-off constant for a single ReLU gate with Gaussian inputs.

 # Safety
 `out` must be writable.
 */
enum TrontideStatus trontide_gaussian_tradeoff(double sigma, double beta, uintptr_t n, double *out);

/*
 Smallest `T` with `κ^(T−1)·Δ1 ≤ ε²δ`.

 # Safety
 `out` must be writable.
 */
enum TrontideStatus trontide_horizon_case1(double delta1,
                                           double eps,
                                           double delta,
                                           double kappa,
                                           uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRONTIDE_H */
