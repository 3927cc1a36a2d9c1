#ifndef HOMWALK_H
#define HOMWALK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HwStatus {
  HW_STATUS_OK = 0,
  HW_STATUS_NULL_POINTER = 1,
  HW_STATUS_INVALID_UTF8 = 2,
  HW_STATUS_PARSE = 3,
  HW_STATUS_INVALID_INPUT = 4,
  HW_STATUS_DIMENSION_MISMATCH = 5,
  HW_STATUS_NUMERICAL = 6,
  HW_STATUS_NO_CONVERGENCE = 7,
  HW_STATUS_PANIC = 8,
} HwStatus;

typedef enum HwVerdictKind {
  HW_VERDICT_KIND_RECURRENT = 0,
  HW_VERDICT_KIND_TRANSIENT = 1,
  HW_VERDICT_KIND_INDETERMINATE = 2,
} HwVerdictKind;

typedef enum HwReason {
  HW_REASON_PROPER_UNIPOTENT = 0,
  HW_REASON_DRIFT_OFF_APRIME = 1,
  HW_REASON_CODIM_AT_LEAST3 = 2,
  HW_REASON_CRITERION_MET = 3,
  HW_REASON_STATISTICALLY_AMBIGUOUS = 4,
} HwReason;

/**
 * Opaque finite probability measure on SL(d,R).
 */
typedef struct HwMeasure HwMeasure;

/**
 * Opaque subgroup `A'N'` in normal form.
 */
typedef struct HwSpec HwSpec;

typedef struct HwVerdict {
  enum HwVerdictKind kind;
  enum HwReason reason;
  double distance_to_aprime;
  double threshold;
  size_t codim;
} HwVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *hw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hw_version(void);

/**
 * Parses a measure file (`{"dim": d, "atoms": [{"weight", "matrix"}]}`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HwStatus hw_measure_from_json(const char *json, struct HwMeasure **out);

/**
 * # Safety
 * `m` must come from [`hw_measure_from_json`] and not be freed twice.
 */
void hw_measure_free(struct HwMeasure *m);

/**
 * Matrix size `d` of the measure, 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t hw_measure_dim(const struct HwMeasure *m);

/**
 * Parses a subgroup file (`{"dim", "a_prime_basis", "unipotent_part"}`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HwStatus hw_spec_from_json(const char *json, struct HwSpec **out);

/**
 * # Safety
 * `s` must come from [`hw_spec_from_json`] and not be freed twice.
 */
void hw_spec_free(struct HwSpec *s);

/**
 * Dimension of `E = a/a'`, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t hw_spec_codim(const struct HwSpec *s);

/**
 * `sigma(g, eta)` and `g . eta`. `eta` is an orthonormal frame (row-major,
 * columns are the frame vectors) or null for the base flag; `eta_out`
 * may be null.
 *
 * # Safety
 * `g` and a non-null `eta`/`eta_out` point to `d*d` doubles; `sigma_out`
 * to `d` doubles.
 */
enum HwStatus hw_iwasawa_cocycle(size_t d,
                                 const double *g,
                                 const double *eta,
                                 double *sigma_out,
                                 double *eta_out);

/**
 * Cartan projection `kappa(g)`, sorted decreasing.
 *
 * # Safety
 * `g` points to `d*d` doubles and `kappa_out` to `d` doubles.
 */
enum HwStatus hw_cartan_projection(size_t d, const double *g, double *kappa_out);

/**
 * Lyapunov vector estimate from the base flag.
 *
 * # Safety
 * `m` is a live handle; `mean_out` and `stderr_out` point to `d` doubles.
 */
enum HwStatus hw_estimate_lyapunov(const struct HwMeasure *m,
                                   size_t n_steps,
                                   size_t n_trajectories,
                                   uint64_t master_seed,
                                   double *mean_out,
                                   double *stderr_out);

/**
 * Recurrence verdict from a Lyapunov estimate (`d` entries each).
 *
 * # Safety
 * `s` is a live handle; `mean`, `stderr` point to `d` doubles; `out` is
 * valid.
 */
enum HwStatus hw_classify(const struct HwSpec *s,
                          size_t d,
                          const double *mean,
                          const double *stderr,
                          double z,
                          struct HwVerdict *out);

/**
 * Grid stationary measure for `d = 2` (weights at angles `i pi / n`).
 *
 * # Safety
 * `m` is a live handle and `weights_out` points to `n_points` doubles.
 */
enum HwStatus hw_stationary_measure(const struct HwMeasure *m,
                                    size_t n_points,
                                    double tol,
                                    size_t max_iter,
                                    double *weights_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMWALK_H */
