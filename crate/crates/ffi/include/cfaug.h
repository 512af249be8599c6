#ifndef CFAUG_H
#define CFAUG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CFAUG_STATUS_OK = 0,
  CFAUG_STATUS_NULL_POINTER = 1,
  CFAUG_STATUS_INVALID_UTF8 = 2,
  CFAUG_STATUS_INVALID_CONFIG = 3,
  CFAUG_STATUS_INVALID_INPUT = 4,
  CFAUG_STATUS_IO = 5,
  CFAUG_STATUS_UNTRAINED = 6,
  CFAUG_STATUS_UNSUPPORTED = 7,
  CFAUG_STATUS_BUFFER_TOO_SMALL = 8,
  CFAUG_STATUS_PANIC = 9,
  CFAUG_STATUS_OTHER = 10,
} CfaugStatus;

typedef struct CfaugBiasedSet CfaugBiasedSet;

typedef struct CfaugCfLabels CfaugCfLabels;

typedef struct CfaugDataset CfaugDataset;

typedef struct CfaugGan CfaugGan;

typedef struct CfaugResult CfaugResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cfaug_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *cfaug_version(void);

/**
 * Synthetic binary dataset.
 *
 * # Safety
 * `out` must be a valid pointer to writable handle storage.
 */
CfaugStatus cfaug_synth_generate(size_t n,
                                 size_t d_tab,
                                 size_t d_rich,
                                 double noise_sd,
                                 double positive_share,
                                 uint64_t weight_seed,
                                 uint64_t data_seed,
                                 CfaugDataset **out);

/**
 * # Safety
 * `d` must be a live dataset handle or null.
 */
size_t cfaug_dataset_len(const CfaugDataset *d);

/**
 * # Safety
 * `d` must be a live dataset handle; `path` a nul-terminated string.
 */
CfaugStatus cfaug_dataset_write_csv(const CfaugDataset *d, const char *path);

/**
 * # Safety
 * `d` must be a handle from this library or null; it is invalid afterwards.
 */
void cfaug_dataset_free(CfaugDataset *d);

/**
 * Splits `d` with the default fractions, fits the tabular recommender on
 * the original split and masks labels of its training split.
 *
 * # Safety
 * `d` must be a live dataset handle and `out` valid handle storage.
 */
CfaugStatus cfaug_bias_induce(const CfaugDataset *d,
                              double label_drop,
                              double row_drop,
                              uint64_t seed_value,
                              CfaugBiasedSet **out);

/**
 * Row and observed-label counts, optionally restricted to one
 * recommendation condition (`condition` 0 or 1; -1 for all rows).
 *
 * # Safety
 * `b` must be a live handle; `rows` and `observed` valid pointers.
 */
CfaugStatus cfaug_biased_counts(const CfaugBiasedSet *b,
                                int32_t condition,
                                size_t *rows,
                                size_t *observed);

/**
 * # Safety
 * `b` must be a handle from this library or null; it is invalid afterwards.
 */
void cfaug_biased_free(CfaugBiasedSet *b);

/**
 * Trains the GAN. `config_toml` may be null for defaults; otherwise it holds
 * GAN settings in the configuration-file syntax.
 *
 * # Safety
 * `b` must be a live handle, `config_toml` null or nul-terminated, `out`
 * valid handle storage.
 */
CfaugStatus cfaug_gan_train(const CfaugBiasedSet *b,
                            const char *config_toml,
                            uint64_t seed_value,
                            CfaugGan **out);

/**
 * Final accuracy of discriminator `index` on a fresh balanced batch.
 *
 * # Safety
 * `g` must be a live handle and `value` a valid pointer.
 */
CfaugStatus cfaug_gan_discriminator_accuracy(const CfaugGan *g, size_t index, double *value);

/**
 * # Safety
 * `g` must be a live handle; `path` nul-terminated.
 */
CfaugStatus cfaug_gan_save(const CfaugGan *g, const char *path);

/**
 * # Safety
 * `path` nul-terminated; `out` valid handle storage.
 */
CfaugStatus cfaug_gan_load(const char *path, CfaugGan **out);

/**
 * # Safety
 * `g` must be a handle from this library or null; it is invalid afterwards.
 */
void cfaug_gan_free(CfaugGan *g);

/**
 * Generated labels for every unobserved row of `b`, sorted by row id.
 * `sampled` nonzero draws from the generated distribution instead of taking
 * the most likely label.
 *
 * # Safety
 * `g` and `b` must be live handles; `out` valid handle storage.
 */
CfaugStatus cfaug_generate(const CfaugGan *g,
                           const CfaugBiasedSet *b,
                           uint64_t seed_value,
                           int32_t sampled,
                           CfaugCfLabels **out);

/**
 * # Safety
 * `cf` must be a live handle or null.
 */
size_t cfaug_cf_len(const CfaugCfLabels *cf);

/**
 * The `index`-th `(id, label)` pair.
 *
 * # Safety
 * `cf` must be a live handle; `id` and `label` valid pointers.
 */
CfaugStatus cfaug_cf_get(const CfaugCfLabels *cf, size_t index, uint64_t *id, double *label);

/**
 * # Safety
 * `cf` must be a handle from this library or null; it is invalid afterwards.
 */
void cfaug_cf_free(CfaugCfLabels *cf);

/**
 * Runs a benchmark from an experiment configuration file, writing artifacts
 * to its output directory.
 *
 * # Safety
 * `config_path` nul-terminated; `out` valid handle storage.
 */
CfaugStatus cfaug_bench_run(const char *config_path, CfaugResult **out);

/**
 * 1 when every method succeeded on every seed, 0 otherwise.
 *
 * # Safety
 * `r` must be a live handle or null.
 */
int32_t cfaug_result_complete(const CfaugResult *r);

/**
 * Renders result tables (`format`: plain, delimited or markup) into `buf`.
 * `needed` receives the size including the terminating nul; when `buf` is
 * null or `len` is too small nothing is copied and `BufferTooSmall` is
 * returned.
 *
 * # Safety
 * `r` must be a live handle, `format` nul-terminated, `buf` null or valid
 * for `len` bytes, `needed` a valid pointer.
 */
CfaugStatus cfaug_result_tables(const CfaugResult *r,
                                const char *format,
                                char *buf,
                                size_t len,
                                size_t *needed);

/**
 * # Safety
 * `r` must be a handle from this library or null; it is invalid afterwards.
 */
void cfaug_result_free(CfaugResult *r);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CFAUG_H */
