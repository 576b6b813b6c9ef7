#ifndef RWPF_H
#define RWPF_H

/* Generated by cbindgen. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RwpfStatus {
  RWPF_STATUS_OK = 0,
  RWPF_STATUS_NULL_POINTER = 1,
  RWPF_STATUS_INVALID_ARGUMENT = 2,
  RWPF_STATUS_UNSUPPORTED = 3,
  RWPF_STATUS_NUMERIC = 4,
  RWPF_STATUS_DEGENERACY = 5,
  RWPF_STATUS_BUFFER_TOO_SMALL = 6,
  RWPF_STATUS_PANIC = 7,
  RWPF_STATUS_INTERNAL = 8,
} RwpfStatus;

typedef enum RwpfPsiMode {
  RWPF_PSI_MODE_MC = 0,
  RWPF_PSI_MODE_RQMC_TIMES = 1,
  RWPF_PSI_MODE_RQMC_TIMES_VALUES = 2,
} RwpfPsiMode;

typedef enum RwpfRandomization {
  RWPF_RANDOMIZATION_NONE = 0,
  RWPF_RANDOMIZATION_DIGITAL_SHIFT = 1,
  RWPF_RANDOMIZATION_OWEN_SCRAMBLE = 2,
} RwpfRandomization;

/**
 * Opaque drift model handle.
 */
typedef struct RwpfModel RwpfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a
 * successful call. Valid until the next rwpf call on the same thread.
 */
const char *rwpf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rwpf_version(void);

/**
 * Builds a built-in model (`zero`, `tanh`, `sine`, `scaled-sine`).
 * Pass NaN for `theta` when the model takes no parameter.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum RwpfStatus rwpf_model_new(const char *name, double theta, struct RwpfModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`rwpf_model_new`] and not be freed twice.
 */
void rwpf_model_free(struct RwpfModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum RwpfStatus rwpf_model_phi(const struct RwpfModel *model, double x, double *out);

/**
 * # Safety
 * `model` must be a live handle; `lower` and `upper` must be writable.
 */
enum RwpfStatus rwpf_model_phi_bounds(const struct RwpfModel *model, double *lower, double *upper);

/**
 * Closed-form log transition density; `Unsupported` for models without one.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum RwpfStatus rwpf_model_log_transition_density(const struct RwpfModel *model,
                                                  double x_a,
                                                  double x_b,
                                                  double t,
                                                  double *out);

/**
 * One unbiased estimate of ψ on a fresh bridge from `(a, x_a)` to `(b, x_b)`.
 * Randomness comes from stream `stream` of `seed`. `out_kappa` may be null.
 *
 * # Safety
 * `model` must be a live handle; `out_value` must be writable.
 */
enum RwpfStatus rwpf_psi_estimate(const struct RwpfModel *model,
                                  double x_a,
                                  double x_b,
                                  double a,
                                  double b,
                                  enum RwpfPsiMode mode,
                                  size_t inner_points,
                                  uint64_t seed,
                                  uint64_t stream,
                                  double *out_value,
                                  uint64_t *out_kappa);

/**
 * Writes `count` Sobol points of dimension `dimension` row-major into `out`,
 * which must hold at least `count * dimension` doubles (`out_len`).
 *
 * # Safety
 * `out` must point to `out_len` writable doubles.
 */
enum RwpfStatus rwpf_sobol_points(size_t dimension,
                                  size_t count,
                                  enum RwpfRandomization randomization,
                                  uint64_t seed,
                                  double *out,
                                  size_t out_len);

/**
 * Runs the particle filter (Gaussian proposal, systematic resampling) and
 * returns the log-likelihood estimate.
 *
 * # Safety
 * `times` and `values` must each point to `n_obs` doubles; `out` must be
 * writable.
 */
enum RwpfStatus rwpf_filter_loglik(const struct RwpfModel *model,
                                   const double *times,
                                   const double *values,
                                   size_t n_obs,
                                   size_t particles,
                                   double x0,
                                   double sigma,
                                   enum RwpfPsiMode mode,
                                   size_t inner_points,
                                   uint64_t seed,
                                   double *out);

/**
 * Exact log-likelihood of the zero-drift model under Gaussian noise.
 *
 * # Safety
 * `times` and `values` must each point to `n_obs` doubles; `out` must be
 * writable.
 */
enum RwpfStatus rwpf_kalman_loglik(double x0,
                                   const double *times,
                                   const double *values,
                                   size_t n_obs,
                                   double sigma,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RWPF_H */
