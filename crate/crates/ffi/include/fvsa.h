#ifndef FVSA_H
#define FVSA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum FvsaStatus {
  FVSA_STATUS_OK = 0,
  FVSA_STATUS_NULL_POINTER = 1,
  FVSA_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Wrong buffer length for the problem.
   */
  FVSA_STATUS_LENGTH_MISMATCH = 3,
  /**
   * Factorization or solver failure.
   */
  FVSA_STATUS_NUMERICAL = 4,
  FVSA_STATUS_CONFIG = 5,
  FVSA_STATUS_PANIC = 6,
} FvsaStatus;

/**
 * Opaque benchmark problem.
 */
typedef struct FvsaProblem FvsaProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a benchmark from its id, e.g. `"tie_beam_coarse"` or `"mbb(60,20)"`.
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FvsaStatus fvsa_problem_new(const char *id, struct FvsaProblem **out);

/**
 * Releases a handle from [`fvsa_problem_new`]. Null is ignored.
 *
 * # Safety
 * `p` must come from [`fvsa_problem_new`] and not be used afterwards.
 */
void fvsa_problem_free(struct FvsaProblem *p);

/**
 * Number of elements, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t fvsa_problem_n_elements(const struct FvsaProblem *p);

/**
 * Writes the benchmark's initial topology into `x`.
 *
 * # Safety
 * `x` must hold `len` bytes.
 */
enum FvsaStatus fvsa_initial_topology(const struct FvsaProblem *p, uint8_t *x, size_t len);

/**
 * Compliance `½ fᵀu` of a topology.
 *
 * # Safety
 * `x` must hold `len` bytes and `out` be valid.
 */
enum FvsaStatus fvsa_compliance(const struct FvsaProblem *p,
                                const uint8_t *x,
                                size_t len,
                                double *out);

/**
 * Sensitivities of every element with a method written as in the config files,
 * e.g. `"woodbury"`, `"hoci(5)"` or `"cgm(2,2,jacobi,all)"`.
 *
 * # Safety
 * `x` and `alpha` must each hold `len` entries; `method` must be NUL-terminated.
 */
enum FvsaStatus fvsa_sensitivity(const struct FvsaProblem *p,
                                 const uint8_t *x,
                                 const char *method,
                                 double *alpha,
                                 size_t len);

/**
 * Spectral norm of every element operator `√K_i K⁻¹ √K_i`.
 *
 * # Safety
 * `x` and `norms` must each hold `len` entries.
 */
enum FvsaStatus fvsa_norm_map(const struct FvsaProblem *p,
                              const uint8_t *x,
                              double *norms,
                              size_t len);

/**
 * Runs the optimizer from `x0` with `key = value` settings (newline separated, same keys as
 * the config files; `problem` is ignored). Writes the best topology and its compliance.
 *
 * # Safety
 * `x0` and `x_best` must each hold `len` bytes; `config` must be NUL-terminated (may be
 * empty); `compliance` must be valid.
 */
enum FvsaStatus fvsa_optimize(const struct FvsaProblem *p,
                              const char *config,
                              const uint8_t *x0,
                              uint8_t *x_best,
                              size_t len,
                              double *compliance);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated, truncated
 * to fit) and returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or hold `len` bytes.
 */
size_t fvsa_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FVSA_H */
