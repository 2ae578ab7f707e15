#ifndef QCNN_FFI_H
#define QCNN_FFI_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum QcnnStatus {
  QCNN_STATUS_OK = 0,
  QCNN_STATUS_INVALID_ARGUMENT = 2,
  QCNN_STATUS_NUMERIC_ERROR = 3,
  QCNN_STATUS_IO_ERROR = 4,
} QcnnStatus;

/**
 * Opaque handle to a model plus its parameter vector.
 */
typedef struct QcnnModelHandle QcnnModelHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. The pointer stays valid
 * until the next failing call on the same thread. Never null.
 */
const char *qcnn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qcnn_version(void);

/**
 * Load a model file. On success writes a handle the caller must release
 * with `qcnn_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QcnnStatus qcnn_model_load(const char *path, struct QcnnModelHandle **out);

/**
 * Save the handle's model (with its current parameters) to `path`.
 *
 * # Safety
 * `handle` must come from `qcnn_model_load` and not have been freed;
 * `path` must be a NUL-terminated string.
 */
enum QcnnStatus qcnn_model_save(const struct QcnnModelHandle *handle, const char *path);

/**
 * Release a handle. A null handle is a no-op.
 *
 * # Safety
 * `handle` must come from `qcnn_model_load` and not be used afterwards.
 */
void qcnn_model_free(struct QcnnModelHandle *handle);

/**
 * Number of trainable parameters, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be valid or null.
 */
uintptr_t qcnn_model_n_params(const struct QcnnModelHandle *handle);

/**
 * Number of qubits (including any ancilla), or 0 for a null handle.
 *
 * # Safety
 * `handle` must be valid or null.
 */
uintptr_t qcnn_model_n_qubits(const struct QcnnModelHandle *handle);

/**
 * Copy the parameter vector into `out` (capacity `len`, must equal
 * `qcnn_model_n_params`).
 *
 * # Safety
 * `out` must point to at least `len` f64 slots.
 */
enum QcnnStatus qcnn_model_get_params(const struct QcnnModelHandle *handle,
                                      double *out,
                                      uintptr_t len);

/**
 * Replace the parameter vector from `values` (length `len`, must equal
 * `qcnn_model_n_params`).
 *
 * # Safety
 * `values` must point to at least `len` f64 values.
 */
enum QcnnStatus qcnn_model_set_params(struct QcnnModelHandle *handle,
                                      const double *values,
                                      uintptr_t len);

/**
 * Run the circuit on one feature row and write P(readout = 1) to `out`.
 * Feature count rules follow the model's encoding.
 *
 * # Safety
 * `features` must point to `n_features` f64 values; `out` must be valid.
 */
enum QcnnStatus qcnn_forward(const struct QcnnModelHandle *handle,
                             const double *features,
                             uintptr_t n_features,
                             double *out);

/**
 * Apply a soft-dropout policy, given as JSON (for example
 * `{"round":{"decimals":1}}` or `"identity"`), to the handle's parameters
 * in place.
 *
 * # Safety
 * `policy_json` must be a NUL-terminated string.
 */
enum QcnnStatus qcnn_apply_policy_json(struct QcnnModelHandle *handle, const char *policy_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCNN_FFI_H */
