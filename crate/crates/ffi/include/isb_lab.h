#ifndef ISB_LAB_H
#define ISB_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsbStatus {
  ISB_STATUS_OK = 0,
  ISB_STATUS_NULL_POINTER = 1,
  ISB_STATUS_INVALID_UTF8 = 2,
  ISB_STATUS_SHAPE = 3,
  ISB_STATUS_NUMERIC = 4,
  ISB_STATUS_CONFIG = 5,
  ISB_STATUS_IO = 6,
  ISB_STATUS_SCHEMA = 7,
  ISB_STATUS_CHECKPOINT = 8,
  ISB_STATUS_OUT_OF_RANGE = 9,
  ISB_STATUS_INTERNAL = 10,
  ISB_STATUS_PANIC = 11,
} IsbStatus;

/**
 * Records of a buffer dump.
 */
typedef struct IsbBuffer IsbBuffer;

/**
 * Experiment configuration.
 */
typedef struct IsbConfig IsbConfig;

/**
 * A feed-forward network loaded from a checkpoint.
 */
typedef struct IsbMlp IsbMlp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t isb_last_error_message(char *buf, size_t len);

/**
 * Generalized advantage estimation over one trajectory. `dones[i]` is
 * nonzero when step `i` ended its episode. Writes `len` values to each of
 * `advantages_out` and `returns_out`.
 *
 * # Safety
 * Every pointer must be valid for `len` elements.
 */
enum IsbStatus isb_compute_gae(const double *rewards,
                               const double *values,
                               const uint8_t *dones,
                               size_t len,
                               double bootstrap_value,
                               double gamma,
                               double lambda,
                               double *advantages_out,
                               double *returns_out);

/**
 * Loads and validates a TOML or JSON experiment config.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum IsbStatus isb_config_load(const char *path, struct IsbConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from [`isb_config_load`].
 */
void isb_config_free(struct IsbConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum IsbStatus isb_config_set_seed(struct IsbConfig *cfg, uint64_t seed);

/**
 * Sets the strategy by name: vanilla, random, obs, cl, terminal or value.
 *
 * # Safety
 * `cfg` must be a live config handle and `name` a NUL-terminated string.
 */
enum IsbStatus isb_config_set_strategy(struct IsbConfig *cfg, const char *name);

/**
 * Runs an experiment into `out_dir`. On success `final_validation_out`, if
 * non-null, receives the last validation return (NaN when none was taken).
 *
 * # Safety
 * `cfg` must be a live config handle, `out_dir` a NUL-terminated string,
 * and `final_validation_out` null or valid for a write.
 */
enum IsbStatus isb_run_experiment(const struct IsbConfig *cfg,
                                  const char *out_dir,
                                  double *final_validation_out);

/**
 * Loads a JSON-lines buffer dump.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum IsbStatus isb_buffer_load(const char *path, struct IsbBuffer **out);

/**
 * # Safety
 * `buf` must be null or a handle from [`isb_buffer_load`].
 */
void isb_buffer_free(struct IsbBuffer *buf);

/**
 * Number of records; 0 for a null handle.
 *
 * # Safety
 * `buf` must be null or a live buffer handle.
 */
size_t isb_buffer_len(const struct IsbBuffer *buf);

/**
 * Copies the observation of record `index` into `out`, which holds `len`
 * doubles. `dim_out`, if non-null, receives the observation width.
 *
 * # Safety
 * `buf` must be a live buffer handle, `out` valid for `len` doubles, and
 * `dim_out` null or valid for a write.
 */
enum IsbStatus isb_buffer_observation(const struct IsbBuffer *buf,
                                      size_t index,
                                      double *out,
                                      size_t len,
                                      size_t *dim_out);

/**
 * Episode step at which record `index` was visited.
 *
 * # Safety
 * `buf` must be a live buffer handle and `step_out` valid for a write.
 */
enum IsbStatus isb_buffer_episode_step(const struct IsbBuffer *buf,
                                       size_t index,
                                       uint32_t *step_out);

/**
 * Loads a network checkpoint written by a run.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum IsbStatus isb_mlp_load(const char *path, struct IsbMlp **out);

/**
 * # Safety
 * `mlp` must be null or a handle from [`isb_mlp_load`].
 */
void isb_mlp_free(struct IsbMlp *mlp);

/**
 * Input and output widths of the network.
 *
 * # Safety
 * `mlp` must be a live handle; the out pointers must be valid for writes.
 */
enum IsbStatus isb_mlp_dims(const struct IsbMlp *mlp, size_t *input_out, size_t *output_out);

/**
 * Forward pass. `input` holds `input_len` doubles, `output` `output_len`.
 *
 * # Safety
 * Pointers must be valid for their stated lengths.
 */
enum IsbStatus isb_mlp_forward(const struct IsbMlp *mlp,
                               const double *input,
                               size_t input_len,
                               double *output,
                               size_t output_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISB_LAB_H */
