#ifndef MICRONET_H
#define MICRONET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MnStatus {
  MN_STATUS_OK = 0,
  MN_STATUS_NULL_ARGUMENT = 1,
  MN_STATUS_INVALID_ARGUMENT = 2,
  MN_STATUS_SHAPE = 3,
  MN_STATUS_PARSE = 4,
  MN_STATUS_INTEGRITY = 5,
  MN_STATUS_IO = 6,
  MN_STATUS_NON_FINITE = 7,
  MN_STATUS_UNDEFINED_METRIC = 8,
  MN_STATUS_PANIC = 9,
} MnStatus;

/**
 * An architecture and its layer graph.
 */
typedef struct MnArch MnArch;

/**
 * Pixel confusion matrix.
 */
typedef struct MnConfusion MnConfusion;

/**
 * Single-precision network weights.
 */
typedef struct MnNetwork MnNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy of the calling thread's last error message, or null if the last
 * call succeeded. Free with `mn_string_free`.
 */
char *mn_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void mn_string_free(char *s);

/**
 * Builds a named variant (`unet`, `bm1`, `bm2`, `bm3`, `micro`), or an
 * architecture TOML file when `name` is a path.
 *
 * # Safety
 * `name` must be a nul-terminated string; `arch` must be writable.
 */
enum MnStatus mn_arch_new(const char *name, struct MnArch **arch);

/**
 * Builds an architecture from TOML text.
 *
 * # Safety
 * `toml` must be a nul-terminated string; `arch` must be writable.
 */
enum MnStatus mn_arch_from_toml(const char *toml, struct MnArch **arch);

/**
 * # Safety
 * `arch` must come from `mn_arch_new` or `mn_arch_from_toml`, or be null.
 */
void mn_arch_free(struct MnArch *arch);

/**
 * # Safety
 * `arch` must be a live handle; `count` must be writable.
 */
enum MnStatus mn_arch_param_count(const struct MnArch *arch, uint64_t *count);

/**
 * Spatial sizes must be multiples of this value.
 *
 * # Safety
 * `arch` must be a live handle; `divisor` must be writable.
 */
enum MnStatus mn_arch_spatial_divisor(const struct MnArch *arch, size_t *divisor);

/**
 * Layer table for a `size`×`size` input as CSV. Free with `mn_string_free`.
 *
 * # Safety
 * `arch` must be a live handle; `csv` must be writable.
 */
enum MnStatus mn_arch_summary_csv(const struct MnArch *arch, size_t size, char **csv);

/**
 * He-initialised weights for `arch`.
 *
 * # Safety
 * `arch` must be a live handle; `network` must be writable.
 */
enum MnStatus mn_network_init(const struct MnArch *arch, uint64_t seed, struct MnNetwork **network);

/**
 * Loads weights from a checkpoint file. Optimizer state is discarded.
 *
 * # Safety
 * `path` must be a nul-terminated string; `network` must be writable.
 */
enum MnStatus mn_network_load(const char *path, struct MnNetwork **network);

/**
 * # Safety
 * `network` must be a live handle; `path` a nul-terminated string.
 */
enum MnStatus mn_network_save(const struct MnNetwork *network, const char *path);

/**
 * # Safety
 * `network` must come from this library, or be null.
 */
void mn_network_free(struct MnNetwork *network);

/**
 * # Safety
 * `network` must be a live handle; `count` must be writable.
 */
enum MnStatus mn_network_param_count(const struct MnNetwork *network, uint64_t *count);

/**
 * Class probabilities for an `(n, c, h, w)` row-major batch. `output` must
 * hold `output_len >= n * classes * h * w` floats.
 *
 * # Safety
 * `input` must point at `n*c*h*w` floats and `output` at `output_len`.
 */
enum MnStatus mn_network_forward(const struct MnNetwork *network,
                                 const float *input,
                                 size_t n,
                                 size_t c,
                                 size_t h,
                                 size_t w,
                                 float *output,
                                 size_t output_len);

/**
 * Per-pixel class labels for one `(3, h, w)` image with values in `[0, 1]`.
 * `labels` must hold `h * w` bytes.
 *
 * # Safety
 * `image` must point at `3*h*w` floats and `labels` at `h*w` bytes.
 */
enum MnStatus mn_network_predict(const struct MnNetwork *network,
                                 const float *image,
                                 size_t h,
                                 size_t w,
                                 uint8_t *labels);

/**
 * Trains from a run config in TOML (the same keys the command line
 * accepts). Uses `data_dir` when set, otherwise generates synthetic data.
 * Writes the log and checkpoint named by the config.
 *
 * # Safety
 * `config` must be a nul-terminated string; `network` must be writable.
 */
enum MnStatus mn_train(const char *config, struct MnNetwork **network);

/**
 * # Safety
 * `matrix` must be writable.
 */
enum MnStatus mn_confusion_new(size_t n_classes, struct MnConfusion **matrix);

/**
 * # Safety
 * `matrix` must come from `mn_confusion_new`, or be null.
 */
void mn_confusion_free(struct MnConfusion *matrix);

/**
 * Adds `h * w` predicted and true labels. Nothing is counted on error.
 *
 * # Safety
 * `matrix` must be a live handle; `predicted` and `truth` must point at
 * `h*w` bytes.
 */
enum MnStatus mn_confusion_accumulate(struct MnConfusion *matrix,
                                      const uint8_t *predicted,
                                      const uint8_t *truth,
                                      size_t h,
                                      size_t w);

/**
 * Count of pixels with true class `truth` predicted as `pred`.
 *
 * # Safety
 * `matrix` must be a live handle; `count` must be writable.
 */
enum MnStatus mn_confusion_get(const struct MnConfusion *matrix,
                               size_t truth,
                               size_t pred,
                               uint64_t *count);

/**
 * # Safety
 * `matrix` must be a live handle; `miou` must be writable.
 */
enum MnStatus mn_confusion_miou(const struct MnConfusion *matrix, double *miou);

/**
 * # Safety
 * `matrix` must be a live handle; `acc` must be writable.
 */
enum MnStatus mn_confusion_acc(const struct MnConfusion *matrix, double *acc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MICRONET_H */
