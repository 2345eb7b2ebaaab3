#ifndef DTS_H
#define DTS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum DtsStatus {
  DTS_STATUS_OK = 0,
  DTS_STATUS_NULL_ARGUMENT = 1,
  DTS_STATUS_INVALID_UTF8 = 2,
  DTS_STATUS_SCHEMA = 3,
  DTS_STATUS_GEOMETRY = 4,
  DTS_STATUS_DIM_MISMATCH = 5,
  DTS_STATUS_PLAN = 6,
  DTS_STATUS_STEP_OUT_OF_RANGE = 7,
  DTS_STATUS_BACKEND = 8,
  DTS_STATUS_OVERLAP = 9,
  DTS_STATUS_INFEASIBLE = 10,
  DTS_STATUS_CONFIG = 11,
  DTS_STATUS_FORMAT = 12,
  DTS_STATUS_IO = 13,
  DTS_STATUS_PANIC = 14,
} DtsStatus;

/**
 * Parsed, validated scene layout.
 */
typedef struct DtsLayout DtsLayout;

/**
 * Latent tensor, `height x width x channels`, channel index fastest.
 */
typedef struct DtsTensor DtsTensor;

/**
 * Precision, recall and F1 of a count match.
 */
typedef struct DtsScores {
  double precision;
  double recall;
  double f1;
} DtsScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *dts_last_error(void);

/**
 * Library version as a static string.
 */
const char *dts_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void dts_string_free(char *s);

/**
 * Parse and validate a layout document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum DtsStatus dts_layout_parse(const char *json, struct DtsLayout **out);

/**
 * Canonical JSON of a layout; free with [`dts_string_free`].
 *
 * # Safety
 * `layout` must be a live handle; `out` must be writable.
 */
enum DtsStatus dts_layout_to_json(const struct DtsLayout *layout, char **out);

/**
 * Count matching against expected counts; a negative count leaves that
 * category unscored.
 *
 * # Safety
 * `layout` must be a live handle; `out` must be writable.
 */
enum DtsStatus dts_layout_metrics(const struct DtsLayout *layout,
                                  int64_t groups,
                                  int64_t humans,
                                  int64_t objects,
                                  struct DtsScores *out);

/**
 * # Safety
 * `layout` must be null or a handle from [`dts_layout_parse`], freed once.
 */
void dts_layout_free(struct DtsLayout *layout);

/**
 * Intersection over union of two `[x0, y0, x1, y1]` boxes.
 *
 * # Safety
 * `a` and `b` must point at four doubles; `out` must be writable.
 */
enum DtsStatus dts_iou(const double *a, const double *b, double *out);

/**
 * Run a generation from JSON parameters, writing the latent to `out_path`
 * and its manifest beside it. The manifest JSON is returned through
 * `manifest_out` when that pointer is non-null.
 *
 * # Safety
 * `params_json` and `out_path` must be NUL-terminated strings.
 */
enum DtsStatus dts_generate(const char *params_json, const char *out_path, char **manifest_out);

/**
 * Tensor from `height * width * channels` values in storage order.
 *
 * # Safety
 * `data` must point at that many doubles; `out` must be writable.
 */
enum DtsStatus dts_tensor_from_data(size_t height,
                                    size_t width,
                                    size_t channels,
                                    const double *data,
                                    struct DtsTensor **out);

/**
 * Load a tensor file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DtsStatus dts_tensor_load(const char *path, struct DtsTensor **out);

/**
 * Save a tensor file; values are stored as `f32`.
 *
 * # Safety
 * `tensor` must be a live handle; `path` a NUL-terminated string.
 */
enum DtsStatus dts_tensor_save(const struct DtsTensor *tensor, const char *path);

/**
 * # Safety
 * `tensor` must be a live handle; the out pointers must be writable.
 */
enum DtsStatus dts_tensor_dims(const struct DtsTensor *tensor,
                               size_t *height,
                               size_t *width,
                               size_t *channels);

/**
 * Borrowed view of the values in storage order; valid while the handle
 * lives. Null when `tensor` is null.
 *
 * # Safety
 * `tensor` must be null or a live handle.
 */
const double *dts_tensor_data(const struct DtsTensor *tensor);

/**
 * Hex SHA-256 of the tensor's file encoding; free with [`dts_string_free`].
 *
 * # Safety
 * `tensor` must be a live handle; `out` must be writable.
 */
enum DtsStatus dts_tensor_digest(const struct DtsTensor *tensor, char **out);

/**
 * # Safety
 * `tensor` must be null or a handle from this library, freed once.
 */
void dts_tensor_free(struct DtsTensor *tensor);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTS_H */
