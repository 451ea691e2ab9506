#ifndef QOPT_H
#define QOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QoptStatus {
  QOPT_STATUS_OK = 0,
  QOPT_STATUS_NULL_POINTER = 1,
  QOPT_STATUS_INVALID_ARGUMENT = 2,
  QOPT_STATUS_IO = 3,
  QOPT_STATUS_DECODE = 4,
  QOPT_STATUS_NUMERICAL = 5,
  QOPT_STATUS_NOT_FOUND = 6,
  QOPT_STATUS_PANIC = 7,
} QoptStatus;

/**
 * An owned byte buffer, e.g. an encoded JPEG.
 */
typedef struct QoptBytes QoptBytes;

/**
 * Run settings, starting from the defaults.
 */
typedef struct QoptConfig QoptConfig;

/**
 * A decoded image.
 */
typedef struct QoptImage QoptImage;

/**
 * The binned candidates of a finished run.
 */
typedef struct QoptRun QoptRun;

/**
 * A quantization table set with its channel assignment.
 */
typedef struct QoptTables QoptTables;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next `qopt_*` call on the same thread.
 */
const char *qopt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qopt_version(void);

/**
 * Wraps `width * height * 3` interleaved RGB samples.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
enum QoptStatus qopt_image_from_rgb8(size_t width,
                                     size_t height,
                                     const uint8_t *data,
                                     size_t len,
                                     struct QoptImage **out);

/**
 * Wraps `width * height` gray samples.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
enum QoptStatus qopt_image_from_gray8(size_t width,
                                      size_t height,
                                      const uint8_t *data,
                                      size_t len,
                                      struct QoptImage **out);

/**
 * Loads a PNG, BMP or raw planar file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must be writable.
 */
enum QoptStatus qopt_image_load(const char *path, struct QoptImage **out);

/**
 * Writes width, height and channel count; any output may be null.
 *
 * # Safety
 * `image` must come from a `qopt_image_*` constructor.
 */
enum QoptStatus qopt_image_dims(const struct QoptImage *image,
                                size_t *width,
                                size_t *height,
                                size_t *channels);

/**
 * # Safety
 * `image` must be null or come from a `qopt_image_*` constructor.
 */
void qopt_image_free(struct QoptImage *image);

/**
 * The standard tables scaled to `quality` (1..=100) for a 1 or 3 channel image.
 *
 * # Safety
 * `out` must be writable.
 */
enum QoptStatus qopt_tables_standard(uint8_t quality, size_t channels, struct QoptTables **out);

/**
 * Parses a table set in the JSON form written by the optimizer.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` must be writable.
 */
enum QoptStatus qopt_tables_from_json(const char *json, struct QoptTables **out);

/**
 * Serializes the table set to JSON.
 *
 * # Safety
 * `tables` must be a live handle and `out` must be writable.
 */
enum QoptStatus qopt_tables_to_json(const struct QoptTables *tables, struct QoptBytes **out);

/**
 * Number of distinct tables in the set.
 *
 * # Safety
 * `tables` must be a live handle and `count` writable.
 */
enum QoptStatus qopt_tables_count(const struct QoptTables *tables, size_t *count);

/**
 * Copies the integer table used for `channel` into `out`, natural order.
 *
 * # Safety
 * `tables` must be a live handle and `out` must hold 64 values.
 */
enum QoptStatus qopt_tables_for_channel(const struct QoptTables *tables,
                                        size_t channel,
                                        uint16_t *out);

/**
 * # Safety
 * `tables` must be null or a live handle.
 */
void qopt_tables_free(struct QoptTables *tables);

/**
 * Default run settings.
 *
 * # Safety
 * `out` must be writable.
 */
enum QoptStatus qopt_config_new(struct QoptConfig **out);

/**
 * Sets one `key = value` entry, using the configuration file keys.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum QoptStatus qopt_config_set(struct QoptConfig *config, const char *key, const char *value);

/**
 * # Safety
 * `config` must be null or a live handle.
 */
void qopt_config_free(struct QoptConfig *config);

/**
 * Encodes the image as a baseline JPEG with the given tables.
 *
 * # Safety
 * `image` and `tables` must be live handles and `out` writable.
 */
enum QoptStatus qopt_encode(const struct QoptImage *image,
                            const struct QoptTables *tables,
                            struct QoptBytes **out);

/**
 * MS-SSIM against the image and entropy-coded bits of encoding it with
 * `tables`, under the settings of `config` (null for defaults).
 *
 * # Safety
 * `image` and `tables` must be live handles; outputs may be null.
 */
enum QoptStatus qopt_measure(const struct QoptImage *image,
                             const struct QoptTables *tables,
                             const struct QoptConfig *config,
                             double *ms_ssim,
                             uint64_t *bits);

/**
 * Trains tables for the image and keeps the best candidate per bin.
 *
 * # Safety
 * `image` must be a live handle, `config` null or a live handle, `out` writable.
 */
enum QoptStatus qopt_optimize(const struct QoptImage *image,
                              const struct QoptConfig *config,
                              struct QoptRun **out);

/**
 * Number of populated bins.
 *
 * # Safety
 * `run` must be a live handle and `count` writable.
 */
enum QoptStatus qopt_run_candidate_count(const struct QoptRun *run, size_t *count);

/**
 * Candidate `index` in bin order: its bin, MS-SSIM, JPEG size and tables.
 * Scalar outputs may be null; `tables` receives a new handle when non-null.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum QoptStatus qopt_run_candidate(const struct QoptRun *run,
                                   size_t index,
                                   size_t *bin,
                                   double *ms_ssim,
                                   size_t *size_bytes,
                                   struct QoptTables **tables);

/**
 * Smallest candidate with MS-SSIM at or above `threshold`.
 *
 * # Safety
 * `run` must be a live handle and `index` writable.
 */
enum QoptStatus qopt_run_select(const struct QoptRun *run, double threshold, size_t *index);

/**
 * # Safety
 * `run` must be null or a live handle.
 */
void qopt_run_free(struct QoptRun *run);

/**
 * Pointer to the buffer contents and their length.
 *
 * # Safety
 * `buf` must be a live handle; the data pointer is valid until it is freed.
 */
enum QoptStatus qopt_bytes_data(const struct QoptBytes *buf, const uint8_t **data, size_t *len);

/**
 * # Safety
 * `buf` must be null or a live handle.
 */
void qopt_bytes_free(struct QoptBytes *buf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QOPT_H */
