#ifndef TNQE_H
#define TNQE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum TnqeStatus {
  TNQE_STATUS_OK = 0,
  TNQE_STATUS_NULL_POINTER = 1,
  TNQE_STATUS_INVALID_INPUT = 2,
  TNQE_STATUS_STRUCTURAL = 3,
  TNQE_STATUS_RESOURCE = 4,
  TNQE_STATUS_NUMERICAL = 5,
  TNQE_STATUS_IO = 6,
  TNQE_STATUS_JSON = 7,
  TNQE_STATUS_PANIC = 8,
} TnqeStatus;

typedef enum TnqeMethod {
  TNQE_METHOD_AMPLITUDE = 0,
  TNQE_METHOD_FULL = 1,
  TNQE_METHOD_CORE = 2,
  TNQE_METHOD_UNITARY = 3,
} TnqeMethod;

/**
 * Circuit plus decoding layout.
 */
typedef struct TnqeEncoding TnqeEncoding;

/**
 * Square grayscale image.
 */
typedef struct TnqeImage TnqeImage;

/**
 * Simulated state vector.
 */
typedef struct TnqeState TnqeState;

/**
 * Encoding options. `layers` is read only by the unitary method; `epochs`
 * of 0 keeps the default training length.
 */
typedef struct TnqeOptions {
  /**
   * One of the `TnqeMethod` values.
   */
  int32_t method;
  size_t rank;
  size_t layers;
  size_t epochs;
  uint64_t seed;
  /**
   * Nonzero refines full/core cores by gradient descent.
   */
  int32_t gradient_fit;
} TnqeOptions;

/**
 * Resource summary of an encoding circuit (fused single-qubit convention).
 */
typedef struct TnqeResources {
  size_t qubits;
  size_t depth;
  size_t fused_depth;
  size_t single_qubit;
  size_t cnot;
  size_t total;
} TnqeResources;

typedef struct TnqeQuality {
  double mse;
  double bce;
  double psnr;
  double ssim;
} TnqeQuality;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next tnqe call on the same thread.
 */
const char *tnqe_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tnqe_version(void);

/**
 * Default options for `method`: rank 4, 4 layers, default epochs, seed 0.
 */
struct TnqeOptions tnqe_options_default(int32_t method);

/**
 * Copies `size * size` row-major pixels into a new image.
 *
 * # Safety
 * `pixels` must point to `len` readable doubles; `out` must be writable.
 */
enum TnqeStatus tnqe_image_new(size_t size,
                               const double *pixels,
                               size_t len,
                               struct TnqeImage **out);

/**
 * # Safety
 * `img` must be NULL or a handle from this library not yet freed.
 */
void tnqe_image_free(struct TnqeImage *img);

/**
 * Side length of the image, or 0 for NULL.
 *
 * # Safety
 * `img` must be NULL or a live handle.
 */
size_t tnqe_image_size(const struct TnqeImage *img);

/**
 * Copies the pixels into `out`, which must hold `size * size` doubles.
 *
 * # Safety
 * `img` must be a live handle; `out` must point to `len` writable doubles.
 */
enum TnqeStatus tnqe_image_pixels(const struct TnqeImage *img, double *out, size_t len);

/**
 * Compiles `img` into an encoding circuit.
 *
 * # Safety
 * `img` and `opts` must be valid; `out` must be writable.
 */
enum TnqeStatus tnqe_encode(const struct TnqeImage *img,
                            const struct TnqeOptions *opts,
                            struct TnqeEncoding **out);

/**
 * # Safety
 * `enc` must be NULL or a live handle.
 */
void tnqe_encoding_free(struct TnqeEncoding *enc);

/**
 * # Safety
 * `enc` must be a live handle; `out` must be writable.
 */
enum TnqeStatus tnqe_encoding_resources(const struct TnqeEncoding *enc, struct TnqeResources *out);

/**
 * Circuit as JSON. Release with [`tnqe_string_free`].
 *
 * # Safety
 * `enc` must be a live handle; `out` must be writable.
 */
enum TnqeStatus tnqe_encoding_circuit_json(const struct TnqeEncoding *enc, char **out);

/**
 * Decoding layout as JSON. Release with [`tnqe_string_free`].
 *
 * # Safety
 * `enc` must be a live handle; `out` must be writable.
 */
enum TnqeStatus tnqe_encoding_layout_json(const struct TnqeEncoding *enc, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void tnqe_string_free(char *s);

/**
 * Simulates the encoding circuit from |0…0⟩, refusing more than
 * `qubit_limit` qubits.
 *
 * # Safety
 * `enc` must be a live handle; `out` must be writable.
 */
enum TnqeStatus tnqe_simulate(const struct TnqeEncoding *enc,
                              size_t qubit_limit,
                              struct TnqeState **out);

/**
 * # Safety
 * `state` must be NULL or a live handle.
 */
void tnqe_state_free(struct TnqeState *state);

/**
 * Number of amplitudes, or 0 for NULL.
 *
 * # Safety
 * `state` must be NULL or a live handle.
 */
size_t tnqe_state_len(const struct TnqeState *state);

/**
 * Copies amplitudes as interleaved (re, im) pairs; `len` counts doubles.
 *
 * # Safety
 * `state` must be a live handle; `out` must point to `len` writable doubles.
 */
enum TnqeStatus tnqe_state_amplitudes(const struct TnqeState *state, double *out, size_t len);

/**
 * Turns a simulated state back into an image using the encoding layout.
 *
 * # Safety
 * `enc` and `state` must be live handles; `out` must be writable.
 */
enum TnqeStatus tnqe_decode(const struct TnqeEncoding *enc,
                            const struct TnqeState *state,
                            struct TnqeImage **out);

/**
 * MSE, BCE, PSNR and SSIM of `test` against `reference`.
 *
 * # Safety
 * Both images must be live handles; `out` must be writable.
 */
enum TnqeStatus tnqe_metrics(const struct TnqeImage *reference,
                             const struct TnqeImage *test,
                             struct TnqeQuality *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TNQE_H */
