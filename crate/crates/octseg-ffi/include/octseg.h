#ifndef OCTSEG_H
#define OCTSEG_H

/* Generated by cbindgen from octseg-ffi/src/lib.rs; edit that file instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a C API call.
 */
typedef enum OctsegStatus {
  /**
   * The call succeeded.
   */
  OCTSEG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  OCTSEG_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was malformed: bad dimensions, intensities outside
   * [0, 1], an invalid config document, or a buffer of the wrong length.
   */
  OCTSEG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The input file could not be read or decoded.
   */
  OCTSEG_STATUS_IO_FAILED = 3,
  /**
   * The pipeline could not segment the scan.
   */
  OCTSEG_STATUS_SEGMENTATION_FAILED = 4,
  /**
   * An internal panic was caught at the boundary.
   */
  OCTSEG_STATUS_PANIC = 5,
} OctsegStatus;

/**
 * Boundary selector for [`octseg_segmentation_boundary`].
 */
typedef enum OctsegBoundary {
  /**
   * Inner limiting membrane.
   */
  OCTSEG_BOUNDARY_ILM = 0,
  /**
   * Lower edge of the retinal nerve fiber layer.
   */
  OCTSEG_BOUNDARY_RNFL = 1,
  /**
   * Retinal pigment epithelium.
   */
  OCTSEG_BOUNDARY_RPE = 2,
} OctsegBoundary;

/**
 * One segmented scan behind an opaque pointer.
 */
typedef struct OctsegSegmentation OctsegSegmentation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the library as a static NUL-terminated string. Never freed by
 * the caller.
 */
const char *octseg_version(void);

/**
 * Message of the calling thread's most recent failure, or null when the
 * last call on this thread succeeded. The caller owns the returned string
 * and must release it with [`octseg_string_free`].
 */
char *octseg_last_error_message(void);

/**
 * Segments a row-major buffer of `rows * cols` intensities in `[0, 1]`.
 *
 * `config_toml` may be null for the built-in defaults. On success `*out`
 * receives the segmentation handle.
 *
 * # Safety
 *
 * `data` must point to `rows * cols` doubles, `config_toml` must be null or
 * NUL-terminated, and `out` must point to writable pointer storage.
 */
enum OctsegStatus octseg_segment_buffer(const double *data,
                                        size_t rows,
                                        size_t cols,
                                        const char *config_toml,
                                        struct OctsegSegmentation **out);

/**
 * Loads a grayscale PNG or PGM and segments it.
 *
 * `config_toml` may be null for the built-in defaults. On success `*out`
 * receives the segmentation handle.
 *
 * # Safety
 *
 * `path` must be NUL-terminated, `config_toml` null or NUL-terminated, and
 * `out` must point to writable pointer storage.
 */
enum OctsegStatus octseg_segment_file(const char *path,
                                      const char *config_toml,
                                      struct OctsegSegmentation **out);

/**
 * Number of rows of the segmented scan, or 0 for a null handle.
 *
 * # Safety
 *
 * `seg` must be null or a live handle from a segment call.
 */
size_t octseg_segmentation_rows(const struct OctsegSegmentation *seg);

/**
 * Number of columns of the segmented scan, or 0 for a null handle. Every
 * boundary spans exactly this many entries.
 *
 * # Safety
 *
 * `seg` must be null or a live handle from a segment call.
 */
size_t octseg_segmentation_cols(const struct OctsegSegmentation *seg);

/**
 * Copies one boundary's per-column rows into `out_rows`, which must hold
 * exactly [`octseg_segmentation_cols`] entries.
 *
 * # Safety
 *
 * `seg` must be a live handle and `out_rows` must point to `len` writable
 * entries.
 */
enum OctsegStatus octseg_segmentation_boundary(const struct OctsegSegmentation *seg,
                                               enum OctsegBoundary which,
                                               size_t *out_rows,
                                               size_t len);

/**
 * Serializes the whole segmentation — boundaries, metrics, correction
 * records, flags — as a JSON document. Returns null on failure; the caller
 * owns the string and must release it with [`octseg_string_free`].
 *
 * # Safety
 *
 * `seg` must be null or a live handle from a segment call.
 */
char *octseg_segmentation_to_json(const struct OctsegSegmentation *seg);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 *
 * `s` must be null or a string obtained from this library and not yet
 * freed.
 */
void octseg_string_free(char *s);

/**
 * Releases a segmentation handle. Null is ignored.
 *
 * # Safety
 *
 * `seg` must be null or a handle obtained from a segment call and not yet
 * freed.
 */
void octseg_segmentation_free(struct OctsegSegmentation *seg);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCTSEG_H */
