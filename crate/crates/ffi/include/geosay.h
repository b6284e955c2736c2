#ifndef GEOSAY_H
#define GEOSAY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GeosayStatus {
  GEOSAY_STATUS_OK = 0,
  GEOSAY_STATUS_NULL_ARGUMENT = 1,
  GEOSAY_STATUS_INVALID_UTF8 = 2,
  GEOSAY_STATUS_IO = 3,
  GEOSAY_STATUS_DECODE = 4,
  GEOSAY_STATUS_PARAMETER = 5,
  GEOSAY_STATUS_PARSE = 6,
  GEOSAY_STATUS_VALIDATION = 7,
  GEOSAY_STATUS_DIMENSION = 8,
  GEOSAY_STATUS_UNDEFINED = 9,
  GEOSAY_STATUS_CONFIG = 10,
  GEOSAY_STATUS_FIT = 11,
  GEOSAY_STATUS_OUT_OF_RANGE = 12,
  GEOSAY_STATUS_PANIC = 13,
} GeosayStatus;

/**
 * Detected junctions.
 */
typedef struct GeosayJunctions GeosayJunctions;

/**
 * Index map together with its thresholded mask.
 */
typedef struct GeosayMap GeosayMap;

/**
 * Building prior model.
 */
typedef struct GeosayPrior GeosayPrior;

/**
 * Detector and pipeline settings. Obtain defaults from
 * [`geosay_options_default`].
 */
typedef struct GeosayOptions {
  double p;
  double gradient_threshold;
  size_t orientation_bins;
  double max_branch_length;
  double min_branch_length;
  double nfa_test_base;
  size_t max_branches;
  /**
   * Degrees.
   */
  double min_angle_sep_deg;
  /**
   * Nonzero selects the mean over nonzero pixels as threshold.
   */
  int32_t mean_over_nonzero;
} GeosayOptions;

/**
 * One junction's scalar fields.
 */
typedef struct GeosayJunctionInfo {
  double x;
  double y;
  double rho;
  size_t branch_count;
} GeosayJunctionInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *geosay_version(void);

/**
 * Copies the calling thread's last error message into `buf` (always
 * NUL-terminated when `len > 0`). Returns the full message length
 * excluding the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t geosay_last_error_message(char *buf, size_t len);

/**
 * Fills `out` with the default settings.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum GeosayStatus geosay_options_default(struct GeosayOptions *out);

/**
 * Loads a prior model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum GeosayStatus geosay_prior_load(const char *path, struct GeosayPrior **out);

/**
 * Posterior building probability of an L-shape with the given opening
 * angle (radians), branch lengths and significance.
 *
 * # Safety
 * `prior` must be a live handle; `out` must be valid for writes.
 */
enum GeosayStatus geosay_prior_posterior(const struct GeosayPrior *prior,
                                         double opening_angle,
                                         double len1,
                                         double len2,
                                         double rho,
                                         double *out);

/**
 * # Safety
 * `prior` must be null or a handle not yet freed.
 */
void geosay_prior_free(struct GeosayPrior *prior);

/**
 * Detects junctions in a row-major image with `channels` interleaved
 * 8-bit samples per pixel. `options` may be null for defaults.
 *
 * # Safety
 * `pixels` must point to `width * height * channels` bytes; `out` must be
 * valid for writes.
 */
enum GeosayStatus geosay_detect(const uint8_t *pixels,
                                size_t width,
                                size_t height,
                                size_t channels,
                                const struct GeosayOptions *options,
                                struct GeosayJunctions **out);

/**
 * Detects junctions in an image file. `options` may be null.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum GeosayStatus geosay_detect_file(const char *path,
                                     const struct GeosayOptions *options,
                                     struct GeosayJunctions **out);

/**
 * Reads a junction file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum GeosayStatus geosay_junctions_read(const char *path, struct GeosayJunctions **out);

/**
 * Writes junctions in the text format.
 *
 * # Safety
 * `junctions` must be a live handle; `path` a NUL-terminated string.
 */
enum GeosayStatus geosay_junctions_write(const struct GeosayJunctions *junctions, const char *path);

/**
 * Number of junctions; 0 for a null handle.
 *
 * # Safety
 * `junctions` must be null or a live handle.
 */
size_t geosay_junctions_len(const struct GeosayJunctions *junctions);

/**
 * # Safety
 * `junctions` must be a live handle; `out` must be valid for writes.
 */
enum GeosayStatus geosay_junctions_get(const struct GeosayJunctions *junctions,
                                       size_t index,
                                       struct GeosayJunctionInfo *out);

/**
 * Orientation (radians) and length of one branch.
 *
 * # Safety
 * `junctions` must be a live handle; `theta` and `length` valid for writes.
 */
enum GeosayStatus geosay_junctions_branch(const struct GeosayJunctions *junctions,
                                          size_t index,
                                          size_t branch,
                                          double *theta,
                                          double *length);

/**
 * # Safety
 * `junctions` must be null or a handle not yet freed.
 */
void geosay_junctions_free(struct GeosayJunctions *junctions);

/**
 * Builds the index map and mask over a `width` x `height` grid.
 * `options` may be null.
 *
 * # Safety
 * `junctions` and `prior` must be live handles; `out` valid for writes.
 */
enum GeosayStatus geosay_gbi(const struct GeosayJunctions *junctions,
                             const struct GeosayPrior *prior,
                             size_t width,
                             size_t height,
                             const struct GeosayOptions *options,
                             struct GeosayMap **out);

/**
 * Width and height of the map.
 *
 * # Safety
 * `map` must be a live handle; `width` and `height` valid for writes.
 */
enum GeosayStatus geosay_map_size(const struct GeosayMap *map, size_t *width, size_t *height);

/**
 * Row-major index values, valid until the map is freed.
 *
 * # Safety
 * `map` must be null or a live handle.
 */
const double *geosay_map_values(const struct GeosayMap *map);

/**
 * Threshold used for the stored mask.
 *
 * # Safety
 * `map` must be null or a live handle.
 */
double geosay_map_threshold(const struct GeosayMap *map);

/**
 * Writes the mask as 0/1 bytes into `buf`, which must hold
 * `width * height` bytes.
 *
 * # Safety
 * `map` must be a live handle; `buf` must point to `len` writable bytes.
 */
enum GeosayStatus geosay_map_mask(const struct GeosayMap *map, uint8_t *buf, size_t len);

/**
 * Re-thresholds the map at `threshold` (strictly greater is building).
 *
 * # Safety
 * `map` must be a live mutable handle.
 */
enum GeosayStatus geosay_map_set_threshold(struct GeosayMap *map, double threshold);

/**
 * Writes the binary map, the mask PNG or the preview PNG. Any path may be
 * null to skip that artifact.
 *
 * # Safety
 * `map` must be a live handle; non-null paths NUL-terminated strings.
 */
enum GeosayStatus geosay_map_write(const struct GeosayMap *map,
                                   const char *gbif_path,
                                   const char *mask_path,
                                   const char *preview_path);

/**
 * # Safety
 * `map` must be null or a handle not yet freed.
 */
void geosay_map_free(struct GeosayMap *map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOSAY_H */
