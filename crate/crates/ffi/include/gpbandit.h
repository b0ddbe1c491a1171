#ifndef GPBANDIT_H
#define GPBANDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GpbStatus {
  GPB_STATUS_OK = 0,
  GPB_STATUS_NULL_POINTER = 1,
  GPB_STATUS_INVALID_INPUT = 2,
  GPB_STATUS_INVALID_CONFIG = 3,
  GPB_STATUS_NUMERICAL = 4,
  GPB_STATUS_IO = 5,
  /**
   * The batch finished but at least one (policy, seed) cell failed.
   */
  GPB_STATUS_PARTIAL_FAILURE = 6,
  GPB_STATUS_PANIC = 7,
} GpbStatus;

/**
 * Opaque posterior handle.
 */
typedef struct GpbPosterior GpbPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *gpb_last_error_message(void);

/**
 * Variance level above which the entropy test admits a point.
 */
double gpb_variance_threshold(double epsilon, double noise_variance);

/**
 * Creates an empty posterior with a squared-exponential kernel.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum GpbStatus gpb_posterior_new(double lengthscale,
                                 double output_scale,
                                 double noise_variance,
                                 struct GpbPosterior **out);

/**
 * # Safety
 * `handle` must come from [`gpb_posterior_new`] and not be freed twice. NULL is ignored.
 */
void gpb_posterior_free(struct GpbPosterior *handle);

/**
 * Appends the observation `(x, y)`.
 *
 * # Safety
 * `handle` must be live; `x` must point to `dim` doubles.
 */
enum GpbStatus gpb_posterior_append(struct GpbPosterior *handle,
                                    const double *x,
                                    size_t dim,
                                    double y);

/**
 * Posterior mean and variance at `x`.
 *
 * # Safety
 * `handle` must be live; `x` must point to `dim` doubles; outputs must be writable.
 */
enum GpbStatus gpb_posterior_predict(const struct GpbPosterior *handle,
                                     const double *x,
                                     size_t dim,
                                     double *mean,
                                     double *variance);

/**
 * Conditional entropy ½ ln(2πe(σ² + σ²(x))) of an observation at `x`.
 *
 * # Safety
 * `handle` must be live; `x` must point to `dim` doubles; `out` must be writable.
 */
enum GpbStatus gpb_posterior_conditional_entropy(const struct GpbPosterior *handle,
                                                 const double *x,
                                                 size_t dim,
                                                 double *out);

/**
 * Writes 1 to `admitted` if an observation at `x` passes the entropy test, else 0.
 *
 * # Safety
 * `handle` must be live; `x` must point to `dim` doubles; `admitted` must be writable.
 */
enum GpbStatus gpb_posterior_admission_test(const struct GpbPosterior *handle,
                                            const double *x,
                                            size_t dim,
                                            double epsilon,
                                            int32_t *admitted);

/**
 * ½ ln det(I + σ⁻²K) over the current dictionary.
 *
 * # Safety
 * `handle` must be live; `out` must be writable.
 */
enum GpbStatus gpb_posterior_information_gain(const struct GpbPosterior *handle, double *out);

/**
 * # Safety
 * `handle` must be live; `out` must be writable.
 */
enum GpbStatus gpb_posterior_model_order(const struct GpbPosterior *handle, size_t *out);

/**
 * Runs the experiment described by a config file and writes its outputs.
 * `out_dir` may be NULL to use the directory named in the config.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out_dir` NULL or NUL-terminated.
 */
enum GpbStatus gpb_run_experiment(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPBANDIT_H */
