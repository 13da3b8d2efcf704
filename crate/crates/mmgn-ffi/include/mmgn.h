/* C interface for the mmgn one-bit matrix completion library. */

#ifndef MMGN_H
#define MMGN_H

/* Generated from the mmgn-ffi crate sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Observation model for the binary responses.
 */
typedef enum MmgnLink {
  /**
   * Gaussian noise: P(y = 1) is the normal CDF of the entry over sigma.
   */
  MMGN_LINK_PROBIT = 0,
  /**
   * Logistic noise: P(y = 1) is the logistic CDF of the entry over sigma.
   */
  MMGN_LINK_LOGISTIC = 1,
} MmgnLink;

/**
 * Factor initialization strategy.
 */
typedef enum MmgnInit {
  /**
   * Scaled truncated SVD of the fill-in matrix (recommended).
   */
  MMGN_INIT_SPECTRAL = 0,
  /**
   * Seeded Gaussian factors.
   */
  MMGN_INIT_RANDOM = 1,
} MmgnInit;

/**
 * Result code for every fallible call.
 */
typedef enum MmgnStatus {
  /**
   * Success.
   */
  MMGN_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  MMGN_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MMGN_STATUS_INVALID_UTF8 = 2,
  /**
   * A value was outside its mathematical domain (rank, noise scale, ...).
   */
  MMGN_STATUS_DOMAIN = 3,
  /**
   * Array or matrix dimensions were inconsistent.
   */
  MMGN_STATUS_DIMENSION = 4,
  /**
   * A file or string could not be parsed.
   */
  MMGN_STATUS_PARSE = 5,
  /**
   * An operating-system I/O error.
   */
  MMGN_STATUS_IO = 6,
  /**
   * An internal panic was caught at the boundary.
   */
  MMGN_STATUS_PANIC = 7,
} MmgnStatus;

/**
 * Why the outer loop stopped.
 */
typedef enum MmgnStopReason {
  /**
   * Relative objective decrease fell below the tolerance.
   */
  MMGN_STOP_REASON_TOL_MET = 0,
  /**
   * The outer iteration cap was reached.
   */
  MMGN_STOP_REASON_MAX_ITER = 1,
  /**
   * Backtracking found no decrease.
   */
  MMGN_STOP_REASON_STALLED = 2,
} MmgnStopReason;

/**
 * Opaque handle to an immutable observation set.
 */
typedef struct MmgnObservations MmgnObservations;

/**
 * Opaque handle to the result of a solve.
 */
typedef struct MmgnReport MmgnReport;

/**
 * Solver settings; obtain defaults from [`mmgn_options_default`] and adjust.
 */
typedef struct MmgnOptions {
  /**
   * Observation model.
   */
  enum MmgnLink link;
  /**
   * Noise scale; must be positive and finite.
   */
  double sigma;
  /**
   * Factorization rank; must lie in 1..=min(m, n).
   */
  size_t rank;
  /**
   * Relative objective-decrease stopping tolerance.
   */
  double tol;
  /**
   * Cap on outer iterations.
   */
  size_t max_outer_iter;
  /**
   * Inner least-squares stopping tolerance.
   */
  double inner_tol;
  /**
   * Inner iteration cap; 0 selects an automatic cap.
   */
  size_t inner_max_iter;
  /**
   * Factor initialization strategy.
   */
  enum MmgnInit init;
  /**
   * Master seed; equal seeds give bitwise-identical runs.
   */
  uint64_t seed;
} MmgnOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on the calling thread.
 *
 * The pointer stays valid until the next failing call on the same thread.
 * Returns an empty string when no failure has been recorded.
 */
const char *mmgn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mmgn_version(void);

/**
 * Default solver options: probit link with unit noise, rank 1, tolerance
 * 1e-4, 300 outer iterations, spectral initialization, seed 0.
 */
struct MmgnOptions mmgn_options_default(void);

/**
 * Build an observation set from parallel arrays of coordinates and labels.
 *
 * Indices are 0-based; `labels[k]` must be +1 or -1. Duplicate coordinates
 * with equal labels collapse; conflicting duplicates are rejected. On success
 * writes a handle to `out`; free it with [`mmgn_observations_free`].
 *
 * # Safety
 * `rows`, `cols`, and `labels` must point to `len` readable elements, and
 * `out` must be a valid pointer.
 */
enum MmgnStatus mmgn_observations_new(uint32_t m,
                                      uint32_t n,
                                      const uint32_t *rows,
                                      const uint32_t *cols,
                                      const int8_t *labels,
                                      size_t len,
                                      struct MmgnObservations **out);

/**
 * Read observations from a triplet CSV file (header `i,j,y`, 1-based
 * indices, labels +1/-1). Pass 0 for `m` or `n` to infer that dimension
 * from the largest index present.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum MmgnStatus mmgn_observations_from_csv(const char *path,
                                           uint32_t m,
                                           uint32_t n,
                                           struct MmgnObservations **out);

/**
 * Number of observed entries; 0 for NULL.
 */
size_t mmgn_observations_len(const struct MmgnObservations *obs);

/**
 * Number of matrix rows; 0 for NULL.
 */
uint32_t mmgn_observations_rows(const struct MmgnObservations *obs);

/**
 * Number of matrix columns; 0 for NULL.
 */
uint32_t mmgn_observations_cols(const struct MmgnObservations *obs);

/**
 * Release an observation set. NULL is a no-op.
 */
void mmgn_observations_free(struct MmgnObservations *obs);

/**
 * Fit a low-rank factorization to the observations.
 *
 * On success writes a report handle to `out`; free it with
 * [`mmgn_report_free`]. Equal inputs and options give bitwise-identical
 * results.
 *
 * # Safety
 * All pointers must be valid.
 */
enum MmgnStatus mmgn_solve(const struct MmgnObservations *obs,
                           const struct MmgnOptions *options,
                           struct MmgnReport **out);

/**
 * Choose a rank from `ranks` by held-out likelihood on an internal
 * validation split. `options.rank` is ignored. Writes the winner to
 * `out_rank`; refitting at that rank is the caller's move.
 *
 * # Safety
 * `ranks` must point to `n_ranks` readable elements; all pointers must be
 * valid.
 */
enum MmgnStatus mmgn_select_rank(const struct MmgnObservations *obs,
                                 const struct MmgnOptions *options,
                                 const size_t *ranks,
                                 size_t n_ranks,
                                 size_t *out_rank);

/**
 * Number of matrix rows in the fitted factorization; 0 for NULL.
 */
size_t mmgn_report_rows(const struct MmgnReport *report);

/**
 * Number of matrix columns in the fitted factorization; 0 for NULL.
 */
size_t mmgn_report_cols(const struct MmgnReport *report);

/**
 * Factorization rank; 0 for NULL.
 */
size_t mmgn_report_rank(const struct MmgnReport *report);

/**
 * Copy the fitted factors out, column-major: `u` receives rows x rank
 * doubles, `v` receives cols x rank doubles. The estimated matrix is
 * `U * V^T`.
 *
 * # Safety
 * `u` and `v` must point to writable buffers of the stated sizes.
 */
enum MmgnStatus mmgn_report_copy_factors(const struct MmgnReport *report, double *u, double *v);

/**
 * Predicted entry `(U V^T)[i, j]` (0-based); NaN for NULL or out-of-range
 * indices.
 */
double mmgn_report_predict(const struct MmgnReport *report, uint32_t i, uint32_t j);

/**
 * Final objective value (negative log-likelihood); NaN for NULL.
 */
double mmgn_report_final_objective(const struct MmgnReport *report);

/**
 * Number of accepted outer iterations; 0 for NULL.
 */
size_t mmgn_report_outer_iterations(const struct MmgnReport *report);

/**
 * Why the solve stopped; NULL maps to the iteration-cap reason.
 */
enum MmgnStopReason mmgn_report_stop_reason(const struct MmgnReport *report);

/**
 * Wall-clock seconds spent inside the solve; NaN for NULL.
 */
double mmgn_report_runtime_seconds(const struct MmgnReport *report);

/**
 * Length of the objective trace (initial value plus one per accepted step);
 * 0 for NULL.
 */
size_t mmgn_report_trace_len(const struct MmgnReport *report);

/**
 * Copy the objective trace into `out`, which must hold `cap` doubles;
 * `cap` must be at least [`mmgn_report_trace_len`].
 *
 * # Safety
 * `out` must point to `cap` writable doubles.
 */
enum MmgnStatus mmgn_report_copy_trace(const struct MmgnReport *report, double *out, size_t cap);

/**
 * Release a report. NULL is a no-op.
 */
void mmgn_report_free(struct MmgnReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMGN_H */
