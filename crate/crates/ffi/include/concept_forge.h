#ifndef CONCEPT_FORGE_H
#define CONCEPT_FORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  CF_STATUS_NULL_POINTER = 1,
  CF_STATUS_INVALID_INPUT = 2,
  CF_STATUS_DIMENSION_MISMATCH = 3,
  CF_STATUS_NOT_FOUND = 4,
  CF_STATUS_IO = 5,
  CF_STATUS_ARTIFACT_MISMATCH = 6,
  CF_STATUS_INTERNAL = 7,
} CfStatus;

/**
 * Opaque handle to an immutable bundle.
 */
typedef struct CfBundle CfBundle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *cf_last_error(void);

/**
 * Loads the bundle directory at `dir` (a UTF-8 path) into `*out`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CfStatus cf_bundle_load(const char *dir, struct CfBundle **out);

/**
 * Releases a handle from [`cf_bundle_load`]. Null is ignored.
 *
 * # Safety
 * `bundle` must come from [`cf_bundle_load`] and not be freed twice.
 */
void cf_bundle_free(struct CfBundle *bundle);

/**
 * Points per cloud, or 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t cf_bundle_points(const struct CfBundle *bundle);

/**
 * Latent dimension, or 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t cf_bundle_latent_dim(const struct CfBundle *bundle);

/**
 * Number of registered concepts, or 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t cf_concept_count(const struct CfBundle *bundle);

/**
 * Name of concept `index` in sorted order, owned by the bundle. Null when out
 * of range.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
const char *cf_concept_name(const struct CfBundle *bundle, size_t index);

/**
 * Encodes `3 * points` coordinates into `latent_len` latent values.
 *
 * # Safety
 * Buffers must hold the stated number of doubles.
 */
enum CfStatus cf_encode(const struct CfBundle *bundle,
                        const double *points,
                        size_t points_len,
                        double *latent_out,
                        size_t latent_len);

/**
 * Decodes a latent code into `3 * points` coordinates.
 *
 * # Safety
 * Buffers must hold the stated number of doubles.
 */
enum CfStatus cf_decode(const struct CfBundle *bundle,
                        const double *latent,
                        size_t latent_len,
                        double *points_out,
                        size_t points_len);

/**
 * Predicted drag for a latent code.
 *
 * # Safety
 * `latent` must hold `latent_len` doubles; `drag_out` must be valid.
 */
enum CfStatus cf_predict_drag(const struct CfBundle *bundle,
                              const double *latent,
                              size_t latent_len,
                              double *drag_out);

/**
 * Moves `latent` along the named concepts by the matching `eps` values and
 * writes the edited code. `out_of_box` (optional) reports whether the result
 * left the latent box.
 *
 * # Safety
 * `names` and `eps` must hold `n_terms` entries, names NUL-terminated.
 */
enum CfStatus cf_blend(const struct CfBundle *bundle,
                       const double *latent,
                       size_t latent_len,
                       const char *const *names,
                       const double *eps,
                       size_t n_terms,
                       double *latent_out,
                       bool *out_of_box);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONCEPT_FORGE_H */
