#ifndef ELASTOCONTACT_H
#define ELASTOCONTACT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Classification of the stability inequality.
 */
typedef enum EcClassification {
  EC_CLASSIFICATION_SATISFIED = 0,
  EC_CLASSIFICATION_NOT_SATISFIED = 1,
  /**
   * Equality; not satisfied.
   */
  EC_CLASSIFICATION_BOUNDARY = 2,
} EcClassification;

/**
 * Result of every fallible call. Positive values mirror the library error
 * kinds; negative values are boundary errors.
 */
typedef enum EcStatus {
  EC_STATUS_OK = 0,
  EC_STATUS_NON_ORIENTATION_PRESERVING = 1,
  EC_STATUS_INVALID_DENSITY = 2,
  EC_STATUS_INVALID_PARAMETER = 3,
  EC_STATUS_DEGENERATE_LIFT = 4,
  EC_STATUS_DEGENERATE_F1N = 5,
  EC_STATUS_MASS_FLUX_NONZERO = 6,
  EC_STATUS_MULTIPLICITY_MISMATCH = 7,
  EC_STATUS_CONSTRAINT_VIOLATED = 8,
  EC_STATUS_SINGULAR_MINOR = 9,
  EC_STATUS_NEGATIVE_TARGET_PRESSURE = 10,
  EC_STATUS_BOUNDARY_SOLVE_SINGULAR = 11,
  EC_STATUS_PRECONDITION_RESIDUAL_TOO_LARGE = 12,
  EC_STATUS_INSUFFICIENT_HISTORY = 13,
  EC_STATUS_CFL_VIOLATION = 14,
  EC_STATUS_NAN_DETECTED = 15,
  EC_STATUS_UNSUPPORTED = 16,
  EC_STATUS_CONFIG = 17,
  EC_STATUS_IO = 18,
  EC_STATUS_NULL_POINTER = -1,
  EC_STATUS_INVALID_UTF8 = -2,
  EC_STATUS_BUFFER_TOO_SMALL = -3,
  /**
   * The handle is in the wrong state for this call.
   */
  EC_STATUS_INVALID_STATE = -4,
  EC_STATUS_PANIC = -5,
} EcStatus;

/**
 * Background state on both sides of a planar front at rest.
 */
typedef struct EcBackground EcBackground;

/**
 * Material parameters.
 */
typedef struct EcMaterial EcMaterial;

/**
 * A configured linearized run; holds its results after [`ec_simulation_run`].
 */
typedef struct EcSimulation EcSimulation;

/**
 * Stability verdict. `lhs = [F_11] / F_11^+`; the condition holds when
 * `lhs < rhs`.
 */
typedef struct EcStability {
  size_t dim;
  double lhs;
  double rhs;
  double margin;
  bool satisfied;
  enum EcClassification classification;
} EcStability;

/**
 * Run summary. `ratio` is NaN when both source norms vanish.
 */
typedef struct EcRunSummary {
  size_t steps;
  double dt;
  double t_final;
  double vdot_norm;
  double psi_norm;
  double f_norm;
  double g_norm;
  double ratio;
  double front_residual_max;
  double e_tan_gap_max;
} EcRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next `ec_*` call on the same thread.
 */
const char *ec_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ec_version(void);

/**
 * Gamma-law material with unit elastic coefficients in dimension `dim`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum EcStatus ec_material_gamma_law(size_t dim, double gamma, struct EcMaterial **out);

/**
 * Number of unknowns `d^2 + d + 2`, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle from [`ec_material_gamma_law`].
 */
size_t ec_material_n_unknowns(const struct EcMaterial *m);

/**
 * # Safety
 * `m` must be null or a handle from [`ec_material_gamma_law`] not yet freed.
 */
void ec_material_free(struct EcMaterial *m);

/**
 * Build the background from the plus-side stretches `f_plus[0..3]`, the
 * minus-side normal stretch and the plus-side entropy.
 *
 * # Safety
 * `m` must be a live material handle, `f_plus` must point to 3 readable
 * doubles and `out` to writable storage for a handle.
 */
enum EcStatus ec_background_new(const struct EcMaterial *m,
                                const double *f_plus,
                                double f11_minus,
                                double s_plus,
                                struct EcBackground **out);

/**
 * Write the state `(p, v, F column-major, S)` of side `sign` (+1 or -1)
 * into `out`. `written` (optional) receives the required length.
 *
 * # Safety
 * `bg` must be a live handle; `out` must hold `len` writable doubles;
 * `written` must be null or writable.
 */
enum EcStatus ec_background_state(const struct EcBackground *bg,
                                  int32_t sign,
                                  double *out,
                                  size_t len,
                                  size_t *written);

/**
 * # Safety
 * `bg` must be null or a handle from [`ec_background_new`] not yet freed.
 */
void ec_background_free(struct EcBackground *bg);

/**
 * Evaluate the stability condition for the given stretches (`f33` is
 * ignored for `dim = 2`).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum EcStatus ec_stability_evaluate(size_t dim,
                                    double f11_plus,
                                    double f11_minus,
                                    double f22,
                                    double f33,
                                    struct EcStability *out);

/**
 * Stability condition at a background.
 *
 * # Safety
 * `bg` must be a live handle and `out` valid writable storage.
 */
enum EcStatus ec_background_stability(const struct EcBackground *bg, struct EcStability *out);

/**
 * Configure a run from TOML text in the command-line configuration format.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` valid writable storage.
 */
enum EcStatus ec_simulation_from_toml(const char *toml, struct EcSimulation **out);

/**
 * Number of tangential boundary nodes, or 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
size_t ec_simulation_boundary_nodes(const struct EcSimulation *sim);

/**
 * Run to the final time. A handle runs once; a second call returns
 * [`EcStatus::InvalidState`].
 *
 * # Safety
 * `sim` must be a live handle; `summary` must be null or writable.
 */
enum EcStatus ec_simulation_run(struct EcSimulation *sim, struct EcRunSummary *summary);

/**
 * Front displacement `psi` at the final time, one value per boundary node.
 *
 * # Safety
 * `sim` must be a live handle that has run; `out` must hold `len` writable
 * doubles; `written` must be null or writable.
 */
enum EcStatus ec_simulation_psi(const struct EcSimulation *sim,
                                double *out,
                                size_t len,
                                size_t *written);

/**
 * # Safety
 * `sim` must be null or a handle from [`ec_simulation_from_toml`] not yet freed.
 */
void ec_simulation_free(struct EcSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELASTOCONTACT_H */
