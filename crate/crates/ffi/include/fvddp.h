#ifndef FVDDP_H
#define FVDDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FvddpMode {
  FVDDP_MODE_EXACT = 0,
  FVDDP_MODE_MC = 1,
  FVDDP_MODE_AUTO = 2,
} FvddpMode;

/**
 * Result codes. Nonzero codes 2-4 match the command-line exit codes.
 */
typedef enum FvddpStatus {
  FVDDP_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument.
   */
  FVDDP_STATUS_BAD_ARGUMENT = 1,
  FVDDP_STATUS_VALIDATION = 2,
  FVDDP_STATUS_NUMERIC = 3,
  FVDDP_STATUS_DEGENERATE_MC = 4,
  FVDDP_STATUS_PANIC = 5,
} FvddpStatus;

/**
 * Opaque dataset handle.
 */
typedef struct FvddpDataset FvddpDataset;

/**
 * Opaque mixture-state handle.
 */
typedef struct FvddpState FvddpState;

/**
 * Inference settings; start from `fvddp_options_default`.
 */
typedef struct FvddpOptions {
  enum FvddpMode mode;
  uint64_t particles;
  double epsilon;
  uint64_t seed;
} FvddpOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. Valid until the
 * next call into this library from the same thread.
 */
const char *fvddp_last_error(void);

struct FvddpOptions fvddp_options_default(void);

/**
 * Parses a dataset JSON document.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a writable pointer.
 */
enum FvddpStatus fvddp_dataset_from_json(const char *json, struct FvddpDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a handle from this library not yet freed.
 */
void fvddp_dataset_free(struct FvddpDataset *dataset);

/**
 * Parses a state JSON document.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a writable pointer.
 */
enum FvddpStatus fvddp_state_from_json(const char *json, struct FvddpState **out);

/**
 * Serializes a state; release the string with `fvddp_string_free`.
 *
 * # Safety
 * `state` must be a live handle and `out` a writable pointer.
 */
enum FvddpStatus fvddp_state_to_json(const struct FvddpState *state, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library not yet freed.
 */
void fvddp_string_free(char *s);

/**
 * # Safety
 * `state` must be NULL or a handle from this library not yet freed.
 */
void fvddp_state_free(struct FvddpState *state);

/**
 * Number of mixture components, or 0 for NULL.
 *
 * # Safety
 * `state` must be NULL or a live handle.
 */
size_t fvddp_state_len(const struct FvddpState *state);

/**
 * Number of registered types, or 0 for NULL.
 *
 * # Safety
 * `state` must be NULL or a live handle.
 */
size_t fvddp_state_types(const struct FvddpState *state);

/**
 * Filtering distribution at the last collection time.
 *
 * # Safety
 * `dataset` and `options` must be live pointers and `out` writable.
 */
enum FvddpStatus fvddp_filter(const struct FvddpDataset *dataset,
                              const struct FvddpOptions *options,
                              struct FvddpState **out);

/**
 * Smoothing distribution at time `t`.
 *
 * # Safety
 * `dataset` and `options` must be live pointers and `out` writable.
 */
enum FvddpStatus fvddp_smooth(const struct FvddpDataset *dataset,
                              double t,
                              const struct FvddpOptions *options,
                              struct FvddpState **out);

/**
 * Predictive probabilities of the next observation. Writes one value per
 * registered type (in registry order) into `per_type`, which must hold
 * `capacity >= fvddp_state_types(state)` values, and the new-type
 * probability into `new_type`.
 *
 * # Safety
 * `per_type` must point to `capacity` writable doubles (may be NULL when the
 * state has no types); `state` and `new_type` must be valid.
 */
enum FvddpStatus fvddp_predict(const struct FvddpState *state,
                               double *per_type,
                               size_t capacity,
                               double *new_type);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FVDDP_H */
