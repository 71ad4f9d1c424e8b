#ifndef FPMATCH_H
#define FPMATCH_H

/* Generated by cbindgen from fpmatch-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FpStatus {
  /**
   * Success; out-parameters are valid.
   */
  FP_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  FP_STATUS_NULL_ARGUMENT = 1,
  /**
   * A path or string argument was not valid UTF-8.
   */
  FP_STATUS_INVALID_UTF8 = 2,
  /**
   * The file or directory could not be read.
   */
  FP_STATUS_IO = 3,
  /**
   * The file exists but does not parse as what it claims to be.
   */
  FP_STATUS_CORRUPT = 4,
  /**
   * A template with no feature tuples was passed to the matcher.
   */
  FP_STATUS_EMPTY_TEMPLATE = 5,
  /**
   * Inputs were well-formed but violate a precondition.
   */
  FP_STATUS_INVALID_INPUT = 6,
  /**
   * An unexpected internal failure.
   */
  FP_STATUS_INTERNAL = 7,
} FpStatus;

/**
 * Opaque handle to an enrolled gallery (manifest plus templates).
 */
typedef struct FpGallery FpGallery;

/**
 * Opaque handle to one loaded partial-print template.
 */
typedef struct FpTemplate FpTemplate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fp_version(void);

/**
 * Static human-readable description of a status code.
 */
const char *fp_status_message(enum FpStatus status);

/**
 * Load one template from a JSON file written by the toolkit.
 *
 * On success, writes a caller-owned handle to `out`.
 */
enum FpStatus fp_template_load(const char *path, struct FpTemplate **out);

/**
 * Number of good-quality feature tuples in the template; 0 for NULL.
 */
size_t fp_template_tuple_count(const struct FpTemplate *template_);

/**
 * Release a template handle. NULL is a no-op.
 */
void fp_template_free(struct FpTemplate *template_);

/**
 * Score two templates; writes the similarity in [0, 1] to `score_out`.
 */
enum FpStatus fp_match(const struct FpTemplate *a, const struct FpTemplate *b, double *score_out);

/**
 * Load an enrolled gallery directory (manifest.json plus *.tpl.json).
 *
 * Files that fail validation are skipped, exactly as the evaluation
 * harness does. On success, writes a caller-owned handle to `out`.
 */
enum FpStatus fp_gallery_load(const char *dir, struct FpGallery **out);

/**
 * Number of enrolled templates; 0 for NULL.
 */
size_t fp_gallery_len(const struct FpGallery *gallery);

/**
 * Release a gallery handle. NULL is a no-op.
 */
void fp_gallery_free(struct FpGallery *gallery);

/**
 * Identify a probe against the gallery at the given threshold.
 *
 * Writes the top-ranked subject id to `subject_out` and its score to
 * `score_out`. When no subject reaches the threshold, writes subject 0
 * (enrolled ids start at 1) and the best score seen.
 */
enum FpStatus fp_identify(const struct FpGallery *gallery,
                          const struct FpTemplate *probe,
                          double threshold,
                          uint32_t *subject_out,
                          double *score_out);

/**
 * Count the enrolled partials that match at least `fraction` of the other
 * subjects at the given threshold.
 */
enum FpStatus fp_masterprint_count(const struct FpGallery *gallery,
                                   double threshold,
                                   double fraction,
                                   size_t *count_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPMATCH_H */
