#ifndef RBM_KPZ_H
#define RBM_KPZ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Families of initial data.
 */
typedef enum RbmFlavor {
  RBM_FLAVOR_PACKED = 0,
  RBM_FLAVOR_FLAT = 1,
  RBM_FLAVOR_STAT = 2,
  RBM_FLAVOR_HALF_FLAT = 3,
  RBM_FLAVOR_HALF_STAT = 4,
  RBM_FLAVOR_STAT_FLAT = 5,
} RbmFlavor;

/**
 * Limit processes.
 */
typedef enum RbmProcess {
  RBM_PROCESS_AIRY2 = 0,
  RBM_PROCESS_AIRY2_PRIME = 1,
  RBM_PROCESS_AIRY1 = 2,
  RBM_PROCESS_AIRY2_TO1 = 3,
  RBM_PROCESS_AIRY2_TO_BM = 4,
  RBM_PROCESS_AIRY_BM_TO1 = 5,
  RBM_PROCESS_FINITE_STEP = 6,
  RBM_PROCESS_AIRY_STAT = 7,
} RbmProcess;

/**
 * Result codes.
 */
typedef enum RbmStatus {
  RBM_STATUS_OK = 0,
  RBM_STATUS_NULL_POINTER = 1,
  RBM_STATUS_INVALID_ARGUMENT = 2,
  RBM_STATUS_DOMAIN = 3,
  RBM_STATUS_NON_FINITE = 4,
  RBM_STATUS_INDEX_RANGE = 5,
  RBM_STATUS_CONTOUR = 6,
  RBM_STATUS_DERIVATIVE = 7,
  RBM_STATUS_SINGULAR = 8,
  RBM_STATUS_IO = 9,
  RBM_STATUS_PANIC = 10,
} RbmStatus;

/**
 * Supremum rules of the simulation.
 */
typedef enum RbmSupRule {
  RBM_SUP_RULE_GRID = 0,
  RBM_SUP_RULE_CORRECTED = 1,
  RBM_SUP_RULE_BRIDGE = 2,
} RbmSupRule;

/**
 * Finite-time kernel specification (flavor, time, contours).
 */
typedef struct RbmKernelSpec RbmKernelSpec;

/**
 * Simulated rescaled samples, ordered by replica and then by target.
 */
typedef struct RbmSamples RbmSamples;

/**
 * One rescaled observation.
 */
typedef struct RbmSample {
  uint64_t replica;
  double r;
  double theta;
  double value;
} RbmSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rbm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rbm_version(void);

/**
 * Creates a kernel specification. `lambda` and `rho` are read only by the
 * flavors that use them.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum RbmStatus rbm_kernel_spec_new(enum RbmFlavor flavor_id,
                                   double lambda,
                                   double rho,
                                   double t,
                                   struct RbmKernelSpec **out);

/**
 * Releases a kernel specification. Null is ignored.
 *
 * # Safety
 * `spec` must be null or a handle from [`rbm_kernel_spec_new`] not yet freed.
 */
void rbm_kernel_spec_free(struct RbmKernelSpec *spec);

/**
 * Kernel value K_t(n1, xi1; n2, xi2).
 *
 * # Safety
 * `spec` must be a live handle and `out` writable.
 */
enum RbmStatus rbm_kernel_eval(const struct RbmKernelSpec *spec,
                               int64_t n1,
                               double xi1,
                               int64_t n2,
                               double xi2,
                               double *out);

/**
 * P(x_{n_k}(t) ≤ a_k for k < len). `order` 0 and `lcut` ≤ 0 select the
 * defaults.
 *
 * # Safety
 * `spec` must be a live handle, `n` and `a` must point to `len` values and
 * `out` must be writable.
 */
enum RbmStatus rbm_finite_cdf(const struct RbmKernelSpec *spec,
                              const int64_t *n,
                              const double *a,
                              uintptr_t len,
                              uintptr_t order,
                              double lcut,
                              double *out);

/**
 * Joint CDF of a limit process at the points (r_k, s_k). `delta` is read
 * only by the finite-step process; `order` 0 and `lcut` ≤ 0 select the
 * defaults.
 *
 * # Safety
 * `r` and `s` must point to `len` values and `out` must be writable.
 */
enum RbmStatus rbm_limit_cdf(enum RbmProcess process_id,
                             double delta,
                             const double *r,
                             const double *s,
                             uintptr_t len,
                             uintptr_t order,
                             double lcut,
                             double *out);

/**
 * Simulates rescaled positions at the targets (r_k, theta_k). `theta` may
 * be null for all-zero shifts; `dt` ≤ 0 selects the default step and
 * `sup_rule` selects how suprema between grid points are taken.
 *
 * # Safety
 * `r` (and `theta` unless null) must point to `len` values; `out` must be
 * writable.
 */
enum RbmStatus rbm_simulate(enum RbmFlavor flavor_id,
                            double lambda,
                            double rho,
                            double t,
                            const double *r,
                            const double *theta,
                            uintptr_t len,
                            uintptr_t samples,
                            uint64_t seed,
                            double dt,
                            enum RbmSupRule sup_rule,
                            struct RbmSamples **out);

/**
 * Number of samples held by a handle (0 for null).
 *
 * # Safety
 * `samples` must be null or a live handle.
 */
uintptr_t rbm_samples_len(const struct RbmSamples *samples);

/**
 * Copies sample `index` into `out`.
 *
 * # Safety
 * `samples` must be a live handle and `out` writable.
 */
enum RbmStatus rbm_samples_get(const struct RbmSamples *samples,
                               uintptr_t index,
                               struct RbmSample *out);

/**
 * Releases a sample handle. Null is ignored.
 *
 * # Safety
 * `samples` must be null or a handle from [`rbm_simulate`] not yet freed.
 */
void rbm_samples_free(struct RbmSamples *samples);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RBM_KPZ_H */
