#ifndef IETLAB_H
#define IETLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every function.
typedef enum IetlabStatus {
  IETLAB_STATUS_OK = 0,
  IETLAB_STATUS_NULL_ARGUMENT = 1,
  IETLAB_STATUS_INVALID_INPUT = 2,
  // A numerical precondition failed (discontinuity, divergence, level cap...).
  IETLAB_STATUS_NUMERICAL = 3,
  IETLAB_STATUS_BUFFER_TOO_SMALL = 4,
  IETLAB_STATUS_IO = 5,
  IETLAB_STATUS_PANIC = 6,
} IetlabStatus;

// A cocycle over the base exchange of an instance.
typedef struct IetlabCocycle IetlabCocycle;

// A periodic-type interval exchange with its period data.
typedef struct IetlabInstance IetlabInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t ietlab_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *ietlab_version(void);

// Builds a bundled instance (golden, rev4, rev5, torus3).
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum IetlabStatus ietlab_instance_from_catalog(const char *name, struct IetlabInstance **out);

// Builds an instance from a loop descriptor {"pair": {...}, "moves": [...]}.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum IetlabStatus ietlab_instance_from_loop_json(const char *json, struct IetlabInstance **out);

// # Safety
// `p` must come from an `ietlab_instance_*` constructor and not be used afterwards.
void ietlab_instance_free(struct IetlabInstance *p);

// Number of intervals.
//
// # Safety
// `p` must be a live instance handle; `out` must be writable.
enum IetlabStatus ietlab_instance_dim(const struct IetlabInstance *p, size_t *out);

// Perron-Frobenius eigenvalue of the period matrix.
//
// # Safety
// `p` must be a live instance handle; `out` must be writable.
enum IetlabStatus ietlab_instance_rho(const struct IetlabInstance *p, double *out);

// Interval lengths of the normalized base exchange, in alphabet order.
//
// # Safety
// `p` must be a live instance handle; `out` must hold `len` doubles.
enum IetlabStatus ietlab_instance_lengths(const struct IetlabInstance *p, double *out, size_t len);

// T(x) for the base exchange, intervals closed on the left.
//
// # Safety
// `p` must be a live instance handle; `out` must be writable.
enum IetlabStatus ietlab_instance_evaluate(const struct IetlabInstance *p, double x, double *out);

// Random strongly symmetric log cocycle with a polynomial part of the given
// degree, shifted to zero mean.
//
// # Safety
// `p` must be a live instance handle; `out` must be writable.
enum IetlabStatus ietlab_cocycle_random_symmetric(const struct IetlabInstance *p,
                                                  uint64_t seed,
                                                  size_t poly_degree,
                                                  struct IetlabCocycle **out);

// Cocycle from its JSON form over the instance's base exchange.
//
// # Safety
// `p` must be a live instance handle, `json` NUL-terminated, `out` writable.
enum IetlabStatus ietlab_cocycle_from_json(const struct IetlabInstance *p,
                                           const char *json,
                                           struct IetlabCocycle **out);

// # Safety
// `c` must come from an `ietlab_cocycle_*` constructor and not be used afterwards.
void ietlab_cocycle_free(struct IetlabCocycle *c);

// Blog: the total mass of the logarithmic constants.
//
// # Safety
// `c` must be a live cocycle handle; `out` must be writable.
enum IetlabStatus ietlab_cocycle_blog(const struct IetlabCocycle *c, double *out);

// Birkhoff sum of `n` terms starting at `x` (negative `n` sums backwards).
//
// # Safety
// `c` must be a live cocycle handle; `out` must be writable.
enum IetlabStatus ietlab_birkhoff_sum(const struct IetlabCocycle *c,
                                      double x,
                                      int64_t n,
                                      double *out);

// The correction vector h of a zero-mean cocycle (`len` >= dimension) and
// the gap to the regression cross-check. `tol` <= 0 selects the default.
//
// # Safety
// Handles must be live; `h` must hold `len` doubles; `gap` may be null.
enum IetlabStatus ietlab_correction(const struct IetlabInstance *p,
                                    const struct IetlabCocycle *c,
                                    double tol,
                                    double *h,
                                    size_t len,
                                    double *gap);

// Runs a scenario given as JSON text and writes its artifacts to `out_dir`.
// Relative paths inside the scenario resolve against `out_dir`. The number
// of failed hard gates goes to `hard_failures`.
//
// # Safety
// Strings must be NUL-terminated; `hard_failures` must be writable.
enum IetlabStatus ietlab_run_scenario(const char *scenario_json,
                                      const char *out_dir,
                                      size_t *hard_failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IETLAB_H */
