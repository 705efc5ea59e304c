#ifndef BLINDCAL_H
#define BLINDCAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum BcStatus {
  BC_STATUS_OK = 0,
  BC_STATUS_NULL_POINTER = 1,
  BC_STATUS_INVALID_ARGUMENT = 2,
  BC_STATUS_SHAPE_MISMATCH = 3,
  BC_STATUS_PARSE_ERROR = 4,
  BC_STATUS_SOLVER_FAILURE = 5,
  BC_STATUS_BUFFER_TOO_SMALL = 6,
  BC_STATUS_INTERNAL = 7,
} BcStatus;

typedef enum BcMode {
  BC_MODE_CALIBRATED = 0,
  BC_MODE_UNCALIBRATED = 1,
} BcMode;

typedef enum BcSolveStatus {
  BC_SOLVE_STATUS_CONVERGED = 0,
  BC_SOLVE_STATUS_ITERATION_LIMIT = 1,
  BC_SOLVE_STATUS_INFEASIBLE = 2,
} BcSolveStatus;

// Opaque problem instance.
typedef struct BcInstance BcInstance;

// Opaque solver result.
typedef struct BcResult BcResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *bc_last_error(void);

// Release a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void bc_string_free(char *s);

// Generate a random instance `Y = diag(d)M₀X₀`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum BcStatus bc_instance_generate(size_t n,
                                   size_t m,
                                   size_t k,
                                   size_t l,
                                   double sigma,
                                   uint64_t seed,
                                   struct BcInstance **out);

// Parse an instance from the JSON written by `blindcal gen`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid handle slot.
enum BcStatus bc_instance_from_json(const char *json, struct BcInstance **out);

// Serialize an instance; free the string with [`bc_string_free`].
//
// # Safety
// `inst` must be a live handle; `out` a valid pointer.
enum BcStatus bc_instance_to_json(const struct BcInstance *inst, char **out);

// # Safety
// `inst` must be a live handle; the outputs valid pointers.
enum BcStatus bc_instance_dims(const struct BcInstance *inst,
                               size_t *n,
                               size_t *m,
                               size_t *k,
                               size_t *l);

// Observations `Y` (m × L, column-major).
//
// # Safety
// `buf` must hold `len` doubles.
enum BcStatus bc_instance_observations(const struct BcInstance *inst, double *buf, size_t len);

// Planted signals `X₀` (N × L, column-major).
//
// # Safety
// `buf` must hold `len` doubles.
enum BcStatus bc_instance_signals(const struct BcInstance *inst, double *buf, size_t len);

// Measurement matrix `M₀` (m × N, column-major).
//
// # Safety
// `buf` must hold `len` doubles.
enum BcStatus bc_instance_matrix(const struct BcInstance *inst, double *buf, size_t len);

// `α = m / Σ(1/dᵢ)`, the scale relating the planted signals to the calibrated optimum.
//
// # Safety
// `inst` must be a live handle; `out` a valid pointer.
enum BcStatus bc_instance_scale_factor(const struct BcInstance *inst, double *out);

// # Safety
// `inst` must come from this library and not be freed twice.
void bc_instance_free(struct BcInstance *inst);

// Solve an instance with default settings. A result is produced even when
// the solver stops early; check [`bc_result_status`].
//
// # Safety
// `inst` must be a live handle; `out` a valid handle slot.
enum BcStatus bc_solve(const struct BcInstance *inst, enum BcMode mode, struct BcResult **out);

// Solve from raw data: `m0` is m × N and `y` is m × L, both column-major.
//
// # Safety
// `m0` must hold `m·n` doubles, `y` `m·l` doubles; `out` a valid handle slot.
enum BcStatus bc_solve_data(const double *m0,
                            size_t m,
                            size_t n,
                            const double *y,
                            size_t l,
                            enum BcMode mode,
                            struct BcResult **out);

// # Safety
// `res` must be a live handle; `out` a valid pointer.
enum BcStatus bc_result_status(const struct BcResult *res, enum BcSolveStatus *out);

// `‖X̂‖₁`.
//
// # Safety
// `res` must be a live handle; `out` a valid pointer.
enum BcStatus bc_result_objective(const struct BcResult *res, double *out);

// # Safety
// `res` must be a live handle; `out` a valid pointer.
enum BcStatus bc_result_iterations(const struct BcResult *res, size_t *out);

// Estimated signals `X̂` (N × L, column-major).
//
// # Safety
// `buf` must hold `len` doubles.
enum BcStatus bc_result_signals(const struct BcResult *res, double *buf, size_t len);

// Estimated inverse gains `δ̂` (length m); fails for uncalibrated results.
//
// # Safety
// `buf` must hold `len` doubles.
enum BcStatus bc_result_inverse_gains(const struct BcResult *res, double *buf, size_t len);

// Serialize a result; free the string with [`bc_string_free`].
//
// # Safety
// `res` must be a live handle; `out` a valid pointer.
enum BcStatus bc_result_to_json(const struct BcResult *res, char **out);

// # Safety
// `res` must come from this library and not be freed twice.
void bc_result_free(struct BcResult *res);

// Normalized cross-correlation of two `rows × cols` column-major matrices.
//
// # Safety
// `a` and `b` must hold `rows·cols` doubles; `out` a valid pointer.
enum BcStatus bc_ncc(const double *a, const double *b, size_t rows, size_t cols, double *out);

// Gain spread in dB for a given σ (`20σ / ln 10`).
double bc_decalibration_db(double sigma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLINDCAL_H */
