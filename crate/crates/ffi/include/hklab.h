#ifndef HKLAB_H
#define HKLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum HkStatus {
  HK_STATUS_OK = 0,
  HK_STATUS_NULL_POINTER = 1,
  HK_STATUS_INVALID_PARAMETER = 2,
  HK_STATUS_POINT_CAP = 3,
  HK_STATUS_UNKNOWN_POINT = 4,
  HK_STATUS_WRONG_SPACE = 5,
  HK_STATUS_ASYMMETRIC_KERNEL = 6,
  HK_STATUS_NO_CONVERGENCE = 7,
  HK_STATUS_BUFFER_TOO_SMALL = 8,
  HK_STATUS_PANIC = 9,
  HK_STATUS_INTERNAL = 10,
} HkStatus;

/**
 * Assembled form with its spectral decomposition.
 */
typedef struct HkForm HkForm;

/**
 * Symmetric jump kernel.
 */
typedef struct HkKernel HkKernel;

/**
 * Scale function `phi(x, r)`.
 */
typedef struct HkScale HkScale;

/**
 * Finite metric measure space.
 */
typedef struct HkSpace HkSpace;

/**
 * Counterexample parameters as plain data.
 */
typedef struct HkCounterexampleConfig {
  double epsilon;
  double xi;
  size_t n;
  double alpha_xi;
  double beta1;
  double beta2;
  double gamma;
  double nu;
  uint32_t level;
} HkCounterexampleConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next hklab call on the same thread.
 */
const char *hk_last_error(void);

/**
 * Cantor product `C_xi^axes` at per-axis depth `level`, refused above `cap` points.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HkStatus hk_space_cantor(double xi,
                              size_t axes,
                              uint32_t level,
                              size_t cap,
                              struct HkSpace **out);

/**
 * Uniform `side^dim` grid on `[0,1]^dim` with the sup metric.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HkStatus hk_space_grid(size_t dim, size_t side, size_t cap, struct HkSpace **out);

/**
 * Two atoms of mass 1/2 at distance `gap`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HkStatus hk_space_two_point(double gap, struct HkSpace **out);

/**
 * Number of points, or 0 for NULL.
 *
 * # Safety
 * `space` must be NULL or a live handle.
 */
size_t hk_space_len(const struct HkSpace *space);

/**
 * Measure of the open ball `B(x, r)`.
 *
 * # Safety
 * `space` must be a live handle and `out` writable.
 */
enum HkStatus hk_space_volume(const struct HkSpace *space, size_t x, double r, double *out);

/**
 * # Safety
 * `space` must be NULL or a handle not yet freed.
 */
void hk_space_free(struct HkSpace *space);

/**
 * Constant exponent `beta` on `n` points.
 *
 * # Safety
 * `out` must be writable.
 */
enum HkStatus hk_scale_constant(size_t n, double beta, double t0, struct HkScale **out);

/**
 * Exponent table `beta[0..n]` with declared bounds `beta1 <= beta <= beta2`.
 *
 * # Safety
 * `beta` must point to `n` readable values and `out` must be writable.
 */
enum HkStatus hk_scale_from_table(const double *beta,
                                  size_t n,
                                  double beta1,
                                  double beta2,
                                  double t0,
                                  struct HkScale **out);

/**
 * Counterexample exponent field on a Cantor product. Pass `xi = NAN` for
 * the default ratio.
 *
 * # Safety
 * `space` must be a live handle and `out` writable.
 */
enum HkStatus hk_scale_counterexample(const struct HkSpace *space,
                                      double epsilon,
                                      double xi,
                                      double t0,
                                      struct HkScale **out);

/**
 * `phi(x, r)`.
 *
 * # Safety
 * `scale` must be a live handle and `out` writable.
 */
enum HkStatus hk_scale_phi(const struct HkScale *scale, size_t x, double r, double *out);

/**
 * # Safety
 * `scale` must be NULL or a handle not yet freed.
 */
void hk_scale_free(struct HkScale *scale);

/**
 * `j(x, y) = c` for all `x != y`.
 *
 * # Safety
 * `out` must be writable.
 */
enum HkStatus hk_kernel_constant(size_t n, double c, struct HkKernel **out);

/**
 * Jumps along one Cantor axis at a time.
 *
 * # Safety
 * `space` and `scale` must be live handles and `out` writable.
 */
enum HkStatus hk_kernel_cantor_axis(const struct HkSpace *space,
                                    const struct HkScale *scale,
                                    struct HkKernel **out);

/**
 * Stable-like kernel `c / (V(x, d) phi(x, d))` symmetrized, `d = d(x, y)`. Grids only.
 *
 * # Safety
 * `space` and `scale` must be live handles and `out` writable.
 */
enum HkStatus hk_kernel_stable_like(const struct HkSpace *space,
                                    const struct HkScale *scale,
                                    double c,
                                    struct HkKernel **out);

/**
 * Tail mass `J(x, B(x, r)^c)`.
 *
 * # Safety
 * `kernel` and `space` must be live handles and `out` writable.
 */
enum HkStatus hk_kernel_tail_mass(const struct HkKernel *kernel,
                                  const struct HkSpace *space,
                                  size_t x,
                                  double r,
                                  double *out);

/**
 * # Safety
 * `kernel` must be NULL or a handle not yet freed.
 */
void hk_kernel_free(struct HkKernel *kernel);

/**
 * Jump tail check over all points and `radii`. Writes the best constant
 * and whether it stays within `threshold`.
 *
 * # Safety
 * Handles must be live, `radii` must point to `count` values, outputs writable.
 */
enum HkStatus hk_tj_check(const struct HkKernel *kernel,
                          const struct HkSpace *space,
                          const struct HkScale *scale,
                          const double *radii,
                          size_t count,
                          double threshold,
                          double *best_constant,
                          bool *passed);

/**
 * Assembles the generator and its eigendecomposition.
 *
 * # Safety
 * `space` and `kernel` must be live handles and `out` writable.
 */
enum HkStatus hk_form_assemble(const struct HkSpace *space,
                               const struct HkKernel *kernel,
                               struct HkForm **out);

/**
 * Number of points of the form's domain, or 0 for NULL.
 *
 * # Safety
 * `form` must be NULL or a live handle.
 */
size_t hk_form_size(const struct HkForm *form);

/**
 * Bottom of the spectrum.
 *
 * # Safety
 * `form` must be a live handle and `out` writable.
 */
enum HkStatus hk_form_lambda1(const struct HkForm *form, double *out);

/**
 * Heat kernel `p_t(x, y)` with respect to the measure, row-major into
 * `buffer`, which must hold `size * size` values.
 *
 * # Safety
 * `form` must be a live handle and `buffer` must point to `len` writable values.
 */
enum HkStatus hk_form_heat_kernel(const struct HkForm *form, double t, double *buffer, size_t len);

/**
 * # Safety
 * `form` must be NULL or a handle not yet freed.
 */
void hk_form_free(struct HkForm *form);

/**
 * Counterexample parameters for `epsilon`. Pass `xi = NAN` for the default ratio.
 *
 * # Safety
 * `out` must be writable.
 */
enum HkStatus hk_counterexample_synthesize(double epsilon,
                                           double xi,
                                           struct HkCounterexampleConfig *out);

/**
 * Limit of `p_{k+1} = q + a (q p_k)^(1/2) + b p_k` from `p0`.
 *
 * # Safety
 * `out` must be writable.
 */
enum HkStatus hk_recursion_limit(double q, double a, double b, double p0, double tol, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HKLAB_H */
