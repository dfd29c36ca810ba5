#ifndef WFSTEIN_H
#define WFSTEIN_H

/* Generated by cbindgen from the wfstein-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WfStatus {
  WF_STATUS_OK = 0,
  WF_STATUS_NULL_POINTER = 1,
  WF_STATUS_INVALID_ARGUMENT = 2,
  WF_STATUS_CAPACITY = 3,
  WF_STATUS_SINGULAR = 4,
  WF_STATUS_DOMAIN = 5,
  WF_STATUS_PANIC = 6,
} WfStatus;

/**
 * A Wright-Fisher model: lattice, transition kernel and (once computed) its stationary law.
 */
typedef struct WfModel WfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds the model for population size `n` and the `k` mutation parameters
 * `beta`, storing the handle in `*out`.
 *
 * # Safety
 * `beta` must point to `k` readable doubles and `out` to a writable pointer.
 */
enum WfStatus wf_model_new(size_t n, const double *beta, size_t k, struct WfModel **out);

/**
 * Releases a handle from [`wf_model_new`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a live handle, not used afterwards.
 */
void wf_model_free(struct WfModel *model);

/**
 * Number of lattice states.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum WfStatus wf_model_num_states(const struct WfModel *model, size_t *out);

/**
 * Writes the `K − 1` type counts of state `index` into `counts`.
 *
 * # Safety
 * `model` must be a live handle and `counts` must hold `len` writable entries.
 */
enum WfStatus wf_model_state_counts(const struct WfModel *model,
                                    size_t index,
                                    size_t *counts,
                                    size_t len);

/**
 * Stationary law in state order; `residual` (may be null) receives `‖πP − π‖₁`.
 *
 * # Safety
 * `model` must be a live handle, `pi` must hold `len` writable doubles.
 */
enum WfStatus wf_model_stationary(struct WfModel *model, double *pi, size_t len, double *residual);

/**
 * Solves `G_U f = h − πh` with `πf = 0`. `factors` (may be null) receives
 * `B_1..B_4`, `residual` (may be null) the maximum equation residual.
 *
 * # Safety
 * `model` must be a live handle; `h` and `f` must hold `len` doubles;
 * `factors`, when non-null, four writable doubles.
 */
enum WfStatus wf_model_solve_stein(struct WfModel *model,
                                   const double *h,
                                   double *f,
                                   size_t len,
                                   double *factors,
                                   double *residual);

/**
 * The five interpolation weights (or their `order`-th derivatives in the
 * local coordinate) at `t ∈ [0, 1]`.
 *
 * # Safety
 * `out` must hold five writable doubles.
 */
enum WfStatus wf_interp_weights(double t, uint32_t order, double *out);

/**
 * `P(Z_K ≤ t)` for `Z ~ Dirichlet(beta)`.
 *
 * # Safety
 * `beta` must point to `k` readable doubles and `out` be writable.
 */
enum WfStatus wf_dirichlet_beta_tail(const double *beta, size_t k, double t, double *out);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length plus one. Returns
 * zero when there is no error.
 *
 * # Safety
 * `buf` must be null or hold `len` writable bytes.
 */
size_t wf_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WFSTEIN_H */
