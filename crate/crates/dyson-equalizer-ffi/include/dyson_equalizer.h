/* C interface for the dyson-equalizer library. Generated by cbindgen; do not edit. */

#ifndef DYSON_EQUALIZER_H
#define DYSON_EQUALIZER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum DeqStatus {
  DEQ_STATUS_OK = 0,
  DEQ_STATUS_INVALID_INPUT = 1,
  DEQ_STATUS_ZERO_ROW_OR_COLUMN = 2,
  DEQ_STATUS_DEGENERATE_MATRIX = 3,
  DEQ_STATUS_NO_CONVERGENCE = 4,
  DEQ_STATUS_TOO_LARGE = 5,
  DEQ_STATUS_SHAPE_MISMATCH = 6,
  DEQ_STATUS_RANK_OUT_OF_RANGE = 7,
  DEQ_STATUS_EMPTY_INPUT = 8,
  DEQ_STATUS_INFEASIBLE_SUPPORT = 9,
  DEQ_STATUS_PARSE_ERROR = 10,
  DEQ_STATUS_IO_ERROR = 11,
  DEQ_STATUS_NULL_POINTER = 12,
  DEQ_STATUS_PANIC = 13,
} DeqStatus;

// How the imaginary shift is chosen in [`deq_equalize`] and
// [`deq_denoise`].
typedef enum DeqEtaMode {
  // `value` is a quantile of the singular values, strictly inside (0, 1).
  DEQ_ETA_MODE_QUANTILE = 0,
  // `value` is the shift itself, strictly positive.
  DEQ_ETA_MODE_FIXED = 1,
} DeqEtaMode;

// Opaque result of [`deq_equalize`].
typedef struct DeqEqualizeResult DeqEqualizeResult;

// Opaque dense row-major matrix handle.
typedef struct DeqMatrix DeqMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Crate version as a static NUL-terminated string; do not free.
const char *deq_version(void);

// Returns the last error message on this thread (caller frees with
// [`deq_string_free`]), or null if none was recorded.
char *deq_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must have been returned by [`deq_last_error_message`] and not freed
// before.
void deq_string_free(char *s);

// Creates a matrix from `rows * cols` row-major values (copied).
//
// # Safety
// `values` must point to at least `rows * cols` readable doubles and `out`
// must be a valid pointer.
enum DeqStatus deq_matrix_new(size_t rows,
                              size_t cols,
                              const double *values,
                              struct DeqMatrix **out);

// # Safety
// `m` must be a handle from this library, not yet freed (null is a no-op).
void deq_matrix_free(struct DeqMatrix *m);

// # Safety
// `m` must be a valid handle.
size_t deq_matrix_rows(const struct DeqMatrix *m);

// # Safety
// `m` must be a valid handle.
size_t deq_matrix_cols(const struct DeqMatrix *m);

// Copies the row-major values into `buffer` (`len` must be `rows * cols`).
//
// # Safety
// `m` must be valid and `buffer` writable for `len` doubles.
enum DeqStatus deq_matrix_copy_values(const struct DeqMatrix *m, double *buffer, size_t len);

// Runs the equalization pipeline on `y`.
//
// # Safety
// `y` must be a valid matrix handle and `out` a valid pointer.
enum DeqStatus deq_equalize(const struct DeqMatrix *y,
                            enum DeqEtaMode eta_mode,
                            double eta_value,
                            struct DeqEqualizeResult **out);

// # Safety
// `r` must be a handle from [`deq_equalize`] (null is a no-op).
void deq_equalize_result_free(struct DeqEqualizeResult *r);

// Shift the pipeline ran at.
//
// # Safety
// `r` must be a valid handle.
double deq_equalize_result_eta(const struct DeqEqualizeResult *r);

// Copies the normalized matrix into a fresh handle.
//
// # Safety
// `r` must be valid and `out` a valid pointer.
enum DeqStatus deq_equalize_result_y_hat(const struct DeqEqualizeResult *r, struct DeqMatrix **out);

// Copies the row scaling factors (`len` must equal the input row count).
//
// # Safety
// `r` must be valid and `buffer` writable for `len` doubles.
enum DeqStatus deq_equalize_result_row_factors(const struct DeqEqualizeResult *r,
                                               double *buffer,
                                               size_t len);

// Copies the column scaling factors (`len` must equal the input column
// count).
//
// # Safety
// `r` must be valid and `buffer` writable for `len` doubles.
enum DeqStatus deq_equalize_result_col_factors(const struct DeqEqualizeResult *r,
                                               double *buffer,
                                               size_t len);

// Rank estimate of an (equalized) matrix by the singular-value threshold
// rule with slack `epsilon`.
//
// # Safety
// `y_hat` must be valid; `out_rank` and `out_threshold` must be valid
// pointers.
enum DeqStatus deq_estimate_rank(const struct DeqMatrix *y_hat,
                                 double epsilon,
                                 size_t *out_rank,
                                 double *out_threshold);

// Equalize, truncate at `rank` (`rank < 0` selects the threshold-estimated
// rank), and unscale. Writes the denoised matrix and the rank used.
//
// # Safety
// `y` must be valid; `out` and `out_rank_used` must be valid pointers.
enum DeqStatus deq_denoise(const struct DeqMatrix *y,
                           enum DeqEtaMode eta_mode,
                           double eta_value,
                           int64_t rank,
                           struct DeqMatrix **out,
                           size_t *out_rank_used);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYSON_EQUALIZER_H */
