#ifndef STRICHLAB_H
#define STRICHLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_ARGUMENT = 2,
  SL_STATUS_INVALID_GRID = 3,
  SL_STATUS_GRID_MISMATCH = 4,
  SL_STATUS_DECAY_VIOLATION = 5,
  SL_STATUS_BAND_VIOLATION = 6,
  SL_STATUS_HORIZON_VIOLATION = 7,
  SL_STATUS_NOT_ADMISSIBLE = 8,
  SL_STATUS_NON_CONVERGENT = 9,
  SL_STATUS_UNKNOWN_POTENTIAL = 10,
  SL_STATUS_UNSUPPORTED = 11,
  SL_STATUS_CONFIG_ERROR = 12,
  SL_STATUS_IO_ERROR = 13,
  SL_STATUS_INTERNAL = 14,
  SL_STATUS_PANIC = 15,
} SlStatus;

/**
 * Opaque sampled complex field.
 */
typedef struct SlField SlField;

/**
 * Opaque uniform grid.
 */
typedef struct SlGrid SlGrid;

/**
 * Opaque potential.
 */
typedef struct SlPotential SlPotential;

/**
 * Flow-lemma constants of a potential.
 */
typedef struct SlLemmaConstants {
  double m;
  double t1;
  double mprime;
  double t2;
} SlLemmaConstants;

/**
 * Hamiltonian flow endpoint; `jacobian` is row-major ∂(x, ξ)/∂(x₀, ξ₀).
 */
typedef struct SlFlowPoint {
  double t;
  double x;
  double xi;
  double jacobian[4];
  double phase;
} SlFlowPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty after a success. Valid until
 * the next call into this library from the same thread.
 */
const char *sl_last_error(void);

/**
 * Static name of a status code.
 */
const char *sl_status_name(enum SlStatus status);

/**
 * Library version as a static string.
 */
const char *sl_version(void);

/**
 * # Safety
 * `out` must be writable. The handle must be released with `sl_grid_free`.
 */
enum SlStatus sl_grid_new(size_t dim, size_t points, double half_width, struct SlGrid **out);

/**
 * # Safety
 * `grid` must come from `sl_grid_new` and not be used afterwards; null is ignored.
 */
void sl_grid_free(struct SlGrid *grid);

/**
 * Total number of samples (points per axis to the power dim).
 *
 * # Safety
 * `grid` must be a live handle or null (returns 0).
 */
size_t sl_grid_len(const struct SlGrid *grid);

/**
 * L²-normalized Gaussian exp(-|x-c|²/(2σ²) + i k·x) with the same c and k on every axis.
 *
 * # Safety
 * `grid` must be live and `out` writable.
 */
enum SlStatus sl_field_gaussian(const struct SlGrid *grid,
                                double center,
                                double sigma,
                                double momentum,
                                struct SlField **out);

/**
 * Field from `len` complex samples given as interleaved (re, im) doubles.
 *
 * # Safety
 * `values` must point to `2 * len` doubles; `grid` must be live and `out` writable.
 */
enum SlStatus sl_field_from_samples(const struct SlGrid *grid,
                                    const double *values,
                                    size_t len,
                                    struct SlField **out);

/**
 * # Safety
 * `field` must come from this library and not be used afterwards; null is ignored.
 */
void sl_field_free(struct SlField *field);

/**
 * Number of complex samples.
 *
 * # Safety
 * `field` must be live or null (returns 0).
 */
size_t sl_field_len(const struct SlField *field);

/**
 * Copy samples out as interleaved (re, im); `len` is the capacity in complex samples.
 *
 * # Safety
 * `out` must have room for `2 * len` doubles.
 */
enum SlStatus sl_field_values(const struct SlField *field, double *out, size_t len);

/**
 * # Safety
 * `field` must be live and `out` writable.
 */
enum SlStatus sl_field_norm_l2(const struct SlField *field, double *out);

/**
 * Builtin by name: zero, harmonic, inverted_harmonic, stark (one parameter E),
 * cosine, quad_plus_trig.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `params` must hold `nparams` doubles
 * (may be null when `nparams` is 0), `out` writable.
 */
enum SlStatus sl_potential_builtin(const char *name,
                                   const double *params,
                                   size_t nparams,
                                   struct SlPotential **out);

/**
 * # Safety
 * `potential` must come from this library and not be used afterwards; null is ignored.
 */
void sl_potential_free(struct SlPotential *potential);

/**
 * # Safety
 * `potential` must be live and `out` writable.
 */
enum SlStatus sl_lemma_constants(const struct SlPotential *potential, struct SlLemmaConstants *out);

/**
 * Störmer–Verlet flow with `steps` steps; 0 picks the default count.
 *
 * # Safety
 * `potential` must be live and `out` writable.
 */
enum SlStatus sl_flow(const struct SlPotential *potential,
                      double t,
                      double x,
                      double xi,
                      size_t steps,
                      struct SlFlowPoint *out);

/**
 * det ∂x(t; x, ξ/t)/∂ξ; `steps` = 0 picks the default count.
 *
 * # Safety
 * `potential` must be live and `out` writable.
 */
enum SlStatus sl_scaled_det(const struct SlPotential *potential,
                            double t,
                            double x,
                            double xi,
                            size_t steps,
                            double *out);

/**
 * U(t)f: closed form when the potential has one, else certified split-step at
 * `split_dt` (0 picks the default).
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum SlStatus sl_propagate(const struct SlField *field,
                           const struct SlPotential *potential,
                           double t,
                           double split_dt,
                           struct SlField **out);

/**
 * Parametrix U₀(t)f.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum SlStatus sl_parametrix_apply(const struct SlField *field,
                                  const struct SlPotential *potential,
                                  double t,
                                  struct SlField **out);

/**
 * Relative residual of U(t)f = U₀(t)f - i∫₀^t R(t,s)U(s)f ds with `nodes` quadrature nodes.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum SlStatus sl_duhamel_residual(const struct SlField *field,
                                  const struct SlPotential *potential,
                                  double t,
                                  size_t nodes,
                                  double split_dt,
                                  double *out);

/**
 * ‖V_g f‖_{L²} with the unit Gaussian window (one dimension).
 *
 * # Safety
 * `field` must be live and `out` writable.
 */
enum SlStatus sl_stft_norm(const struct SlField *field, double *out);

/**
 * ‖f‖_{W(ℱL^p, L^q)}; pass INFINITY for an infinite exponent.
 *
 * # Safety
 * `field` must be live and `out` writable.
 */
enum SlStatus sl_amalgam_norm(const struct SlField *field, double p, double q, double *out);

/**
 * ‖f‖_{W(ℱL^{p′,2}, L^p)}.
 *
 * # Safety
 * `field` must be live and `out` writable.
 */
enum SlStatus sl_amalgam_lorentz_norm(const struct SlField *field, double p, double *out);

/**
 * Strichartz quotient over [-T, T] with `samples` uniform times (0 picks 65).
 * `endpoint` non-zero selects the Lorentz inner norm.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum SlStatus sl_strichartz_quotient(const struct SlField *field,
                                     const struct SlPotential *potential,
                                     double big_t,
                                     double p,
                                     double r,
                                     int32_t endpoint,
                                     size_t samples,
                                     double *out);

/**
 * Run the verify suites for a TOML config (null = defaults) and write report.json
 * and results.csv under `out_dir` (null = no files). `passed` receives 1 or 0.
 *
 * # Safety
 * Strings must be NUL-terminated or null; `passed` writable.
 */
enum SlStatus sl_verify(const char *config_toml, const char *out_dir, int32_t *passed);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* STRICHLAB_H */
