#ifndef VEIL_H
#define VEIL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VeilStatus {
  VEIL_STATUS_OK = 0,
  VEIL_STATUS_NULL_POINTER = 1,
  VEIL_STATUS_INVALID_ARGUMENT = 2,
  VEIL_STATUS_DIMENSION_MISMATCH = 3,
  VEIL_STATUS_IO = 4,
  VEIL_STATUS_FORMAT = 5,
  VEIL_STATUS_NON_FINITE = 6,
  VEIL_STATUS_BUFFER_TOO_SMALL = 7,
  VEIL_STATUS_PANIC = 8,
} VeilStatus;

/**
 * A latent batch read from disk.
 */
typedef struct VeilLatentFile VeilLatentFile;

/**
 * A loaded encoder.
 */
typedef struct VeilModel VeilModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *veil_last_error(void);

/**
 * Static name of a status code.
 */
const char *veil_status_name(enum VeilStatus status);

const char *veil_version(void);

/**
 * Loads an encoder artifact from `path` into `*out`.
 */
enum VeilStatus veil_model_load(const char *path, struct VeilModel **out);

/**
 * Loads an encoder artifact from memory.
 */
enum VeilStatus veil_model_load_bytes(const uint8_t *data, size_t len, struct VeilModel **out);

void veil_model_free(struct VeilModel *model);

/**
 * Raw feature count D, or 0 for a null handle.
 */
size_t veil_model_input_dim(const struct VeilModel *model);

/**
 * Latent width E, or 0 for a null handle.
 */
size_t veil_model_latent_dim(const struct VeilModel *model);

/**
 * Encodes `rows` row-major raw records of `cols` doubles into `out`, which
 * must hold `rows * latent_dim` floats.
 */
enum VeilStatus veil_model_encode(const struct VeilModel *model,
                                  const double *x,
                                  size_t rows,
                                  size_t cols,
                                  float *out,
                                  size_t out_len);

/**
 * Writes a latent batch file. `targets` may be null; otherwise it holds
 * `rows` doubles.
 */
enum VeilStatus veil_latent_file_write(const char *path,
                                       const float *latents,
                                       size_t rows,
                                       size_t dim,
                                       const double *targets);

enum VeilStatus veil_latent_file_read(const char *path, struct VeilLatentFile **out);

void veil_latent_file_free(struct VeilLatentFile *file);

size_t veil_latent_file_rows(const struct VeilLatentFile *file);

size_t veil_latent_file_dim(const struct VeilLatentFile *file);

/**
 * Row-major latents owned by the handle; null for a null handle.
 */
const float *veil_latent_file_latents(const struct VeilLatentFile *file);

/**
 * Targets owned by the handle, or null when the file has none.
 */
const double *veil_latent_file_targets(const struct VeilLatentFile *file);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VEIL_H */
