#ifndef OEG_H
#define OEG_H

/* Generated by cbindgen from the oeg-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every API call.
 */
typedef enum OegStatus {
  /**
   * Call succeeded.
   */
  OEG_STATUS_OK = 0,
  /**
   * A pointer argument was null.
   */
  OEG_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  OEG_STATUS_INVALID_UTF8 = 2,
  /**
   * Invalid input data or configuration.
   */
  OEG_STATUS_INVALID_INPUT = 3,
  /**
   * A required artifact is missing on disk.
   */
  OEG_STATUS_MISSING_ARTIFACT = 4,
  /**
   * An artifact was produced under a different configuration.
   */
  OEG_STATUS_CONFIG_MISMATCH = 5,
  /**
   * Numerical failure inside the pipeline.
   */
  OEG_STATUS_NUMERICAL = 6,
  /**
   * Filesystem or serialization failure.
   */
  OEG_STATUS_IO = 7,
  /**
   * An output buffer was too small.
   */
  OEG_STATUS_BUFFER_TOO_SMALL = 8,
} OegStatus;

/**
 * Opaque pipeline configuration.
 */
typedef struct OegConfig OegConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the most recent failure on this thread.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *oeg_last_error_message(void);

/**
 * Create a configuration with default values. Free with [`oeg_config_free`].
 */
struct OegConfig *oeg_config_new(void);

/**
 * Load a configuration from a flat `key = value` file.
 *
 * # Safety
 * `path` must be a valid C string; `out` must point to writable storage.
 */
enum OegStatus oeg_config_load(const char *path, struct OegConfig **out);

/**
 * Override one configuration key from its textual representation.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be C strings.
 */
enum OegStatus oeg_config_set(struct OegConfig *cfg, const char *key, const char *value);

/**
 * Hex SHA-256 hash of the configuration, as embedded in artifacts.
 *
 * `buf` receives a NUL-terminated string; `buf_len` must be at least 65.
 *
 * # Safety
 * `cfg` must come from this library; `buf` must hold `buf_len` bytes.
 */
enum OegStatus oeg_config_hash(const struct OegConfig *cfg, char *buf, uintptr_t buf_len);

/**
 * Release a configuration handle. Null is ignored.
 *
 * # Safety
 * `cfg` must come from this library and must not be used afterwards.
 */
void oeg_config_free(struct OegConfig *cfg);

/**
 * Generate a synthetic cohort dataset from a spec JSON file.
 *
 * # Safety
 * All pointers must be valid C strings.
 */
enum OegStatus oeg_synth(const char *spec_path, const char *out_dir);

/**
 * Extract feature atoms for every recording of a dataset.
 *
 * # Safety
 * Pointers must be valid C strings / handles from this library.
 */
enum OegStatus oeg_features(const char *dataset, const char *out_dir, const struct OegConfig *cfg);

/**
 * Train the background mixture over stored features.
 *
 * # Safety
 * Pointers must be valid C strings / handles from this library.
 */
enum OegStatus oeg_train_ubm(const char *dataset,
                             const char *features,
                             const char *out_path,
                             const struct OegConfig *cfg);

/**
 * MAP-adapt every recording and store supervectors.
 *
 * # Safety
 * Pointers must be valid C strings / handles from this library.
 */
enum OegStatus oeg_adapt(const char *dataset,
                         const char *features,
                         const char *model,
                         const char *out_dir,
                         const struct OegConfig *cfg);

/**
 * Write the dense kernel matrix over admission supervectors.
 *
 * # Safety
 * Pointers must be valid C strings / handles from this library.
 */
enum OegStatus oeg_kernel_matrix(const char *dataset,
                                 const char *supervectors,
                                 const char *out_path,
                                 const struct OegConfig *cfg);

/**
 * Cone distance between two landmark configurations.
 *
 * `a` and `b` are row-major `n x d` coordinate arrays with `d` of 2 or 3.
 * `k` weights the positive-definite term, `eps` is the degeneracy floor;
 * pass 1.0 and 1e-8 for the defaults.
 *
 * # Safety
 * `a` and `b` must each point to `n * d` doubles; `out` must be writable.
 */
enum OegStatus oeg_shape_distance(const double *a,
                                  const double *b,
                                  uintptr_t n,
                                  uintptr_t d,
                                  double k,
                                  double eps,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OEG_H */
