#ifndef HJPROX_H
#define HJPROX_H

/* Generated by cbindgen from hjprox-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirrored into the generated header.
typedef enum HjproxStatus {
  HJPROX_STATUS_OK = 0,
  HJPROX_STATUS_INVALID_ARGUMENT = 2,
  HJPROX_STATUS_NUMERIC_FAILURE = 3,
  HJPROX_STATUS_MISSING_DEPENDENCY = 4,
  HJPROX_STATUS_UNSUPPORTED = 5,
  HJPROX_STATUS_NONDIFFERENTIABLE = 6,
  HJPROX_STATUS_OUT_OF_RANGE = 7,
  HJPROX_STATUS_PANIC = 8,
} HjproxStatus;

// Opaque backward-viscosity evaluator (memoizing).
typedef struct HjproxBackward HjproxBackward;

// Opaque trained-network handle.
typedef struct HjproxIcnn HjproxIcnn;

// Opaque minorant-model handle.
typedef struct HjproxMinorant HjproxMinorant;

// Opaque analytic-prior handle.
typedef struct HjproxPrior HjproxPrior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent error on this thread. Valid until the
// next hjprox call on the same thread.
const char *hjprox_last_error_message(void);

// Static library version string.
const char *hjprox_version(void);

// Creates a prior from a JSON config (same schema as the experiment files,
// e.g. `{"kind":"l1"}` or
// `{"kind":"min_plus_quadratics","centers":[[1,0],[0.7,0.7]],"sigmas":[1,1]}`)
// instantiated at dimension `dim`.
//
// # Safety
// `config_json` must be a valid NUL-terminated string and `out` a valid
// pointer; the returned handle must be freed with [`hjprox_prior_free`].
enum HjproxStatus hjprox_prior_new(const char *config_json, size_t dim, struct HjproxPrior **out);

// # Safety
// `handle` must come from [`hjprox_prior_new`] and not be freed twice.
void hjprox_prior_free(struct HjproxPrior *handle);

// J(y).
//
// # Safety
// `y` must point to `dim` doubles matching the handle's dimension.
enum HjproxStatus hjprox_prior_eval_j(const struct HjproxPrior *handle,
                                      const double *y,
                                      size_t dim,
                                      double *out);

// Closed-form S(x,t).
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_prior_eval_s(const struct HjproxPrior *handle,
                                      const double *x,
                                      size_t dim,
                                      double t,
                                      double *out);

// psi(x,t) = ||x||^2/2 - t S(x,t).
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_prior_eval_psi(const struct HjproxPrior *handle,
                                        const double *x,
                                        size_t dim,
                                        double t,
                                        double *out);

// Unique proximal point, writing `dim` doubles to `out_y`. Fails with
// `Unsupported` when the argmin set is multivalued at `x`.
//
// # Safety
// `out_y` must have room for `dim` doubles.
enum HjproxStatus hjprox_prior_prox_unique(const struct HjproxPrior *handle,
                                           const double *x,
                                           size_t dim,
                                           double t,
                                           double *out_y);

// Forward Lax-Oleinik solve: writes S(x,t) to `out_value` and the selected
// minimizer to `out_minimizer` (`dim` doubles, may be NULL).
//
// # Safety
// As for [`hjprox_prior_prox_unique`].
enum HjproxStatus hjprox_forward_solve(const struct HjproxPrior *handle,
                                       const double *x,
                                       size_t dim,
                                       double t,
                                       double *out_value,
                                       double *out_minimizer);

// Ground-truth J_BVS evaluation (closed form when the family has one,
// numeric backward sup otherwise).
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_prior_jbvs(const struct HjproxPrior *handle,
                                    const double *y,
                                    size_t dim,
                                    double t,
                                    double box_halfwidth,
                                    double *out);

// Creates a memoizing numeric backward-viscosity evaluator for the prior.
//
// # Safety
// `out` must be valid; free the handle with [`hjprox_backward_free`].
enum HjproxStatus hjprox_backward_new(const struct HjproxPrior *handle,
                                      double t,
                                      double box_halfwidth,
                                      struct HjproxBackward **out);

// # Safety
// `handle` must come from [`hjprox_backward_new`] and not be freed twice.
void hjprox_backward_free(struct HjproxBackward *handle);

// Numeric J_BVS(y) via the backward sup.
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_backward_eval(const struct HjproxBackward *handle,
                                       const double *y,
                                       size_t dim,
                                       double *out);

// Loads a trained network checkpoint.
//
// # Safety
// `path` must be a valid NUL-terminated string; free the handle with
// [`hjprox_icnn_free`].
enum HjproxStatus hjprox_icnn_load(const char *path, struct HjproxIcnn **out);

// # Safety
// `handle` must come from [`hjprox_icnn_load`] and not be freed twice.
void hjprox_icnn_free(struct HjproxIcnn *handle);

// Input dimension of a loaded network.
//
// # Safety
// `handle` must be a live handle from [`hjprox_icnn_load`].
enum HjproxStatus hjprox_icnn_input_dim(const struct HjproxIcnn *handle, size_t *out);

// Network output at `y`.
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_icnn_forward(const struct HjproxIcnn *handle,
                                      const double *y,
                                      size_t dim,
                                      double *out);

// Exact input gradient (the learned proximal map when the model plays the
// psi role); writes `dim` doubles.
//
// # Safety
// As for [`hjprox_prior_prox_unique`].
enum HjproxStatus hjprox_icnn_input_gradient(const struct HjproxIcnn *handle,
                                             const double *y,
                                             size_t dim,
                                             double *out_grad);

// Direct prior recovery from a conjugate-network checkpoint:
// phi_G(x) - ||x||^2/2, divided by t when `general_t` is nonzero.
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_recover_direct(const struct HjproxIcnn *handle,
                                        const double *x,
                                        size_t dim,
                                        double t,
                                        int32_t general_t,
                                        double *out);

// Invert-method recovery from a potential checkpoint.
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_recover_invert(const struct HjproxIcnn *handle,
                                        const double *y,
                                        size_t dim,
                                        double t,
                                        double search_halfwidth,
                                        double *out);

// Loads a minorant model file.
//
// # Safety
// As for [`hjprox_icnn_load`]; free with [`hjprox_minorant_free`].
enum HjproxStatus hjprox_minorant_load(const char *path, struct HjproxMinorant **out);

// # Safety
// `handle` must come from [`hjprox_minorant_load`] and not be freed twice.
void hjprox_minorant_free(struct HjproxMinorant *handle);

// Minorant value at `y`.
//
// # Safety
// As for [`hjprox_prior_eval_j`].
enum HjproxStatus hjprox_minorant_eval(const struct HjproxMinorant *handle,
                                       const double *y,
                                       size_t dim,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HJPROX_H */
