/* C interface for the memvq vector-quantization library. */

#ifndef MEMVQ_H
#define MEMVQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every FFI call.
 */
typedef enum MvqStatus {
  MVQ_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MVQ_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MVQ_STATUS_INVALID_STRING = 2,
  /**
   * Matrix shapes are inconsistent.
   */
  MVQ_STATUS_SHAPE = 3,
  /**
   * Input contains NaN or infinity.
   */
  MVQ_STATUS_NON_FINITE = 4,
  /**
   * Too few vectors for the requested codebook size.
   */
  MVQ_STATUS_INSUFFICIENT_SAMPLE = 5,
  /**
   * Invalid configuration value.
   */
  MVQ_STATUS_CONFIG = 6,
  /**
   * A code id is out of range for the model.
   */
  MVQ_STATUS_CORRUPT_CODES = 7,
  /**
   * Malformed shard bytes.
   */
  MVQ_STATUS_FORMAT = 8,
  /**
   * Shard shorter than its header implies.
   */
  MVQ_STATUS_TRUNCATED = 9,
  /**
   * Shard checksum mismatch.
   */
  MVQ_STATUS_CORRUPTION = 10,
  /**
   * Underlying I/O failure.
   */
  MVQ_STATUS_IO = 11,
  /**
   * A numeric result does not fit the C field width.
   */
  MVQ_STATUS_OVERFLOW = 12,
  /**
   * Internal panic; state may be inconsistent.
   */
  MVQ_STATUS_PANIC = 13,
} MvqStatus;

/**
 * Opaque compressed-codes handle.
 */
typedef struct MvqCodes MvqCodes;

/**
 * Opaque trained codec handle.
 */
typedef struct MvqModel MvqModel;

/**
 * Training configuration; obtain defaults from `mvq_train_config_default`.
 */
typedef struct MvqTrainConfig {
  size_t subspaces;
  size_t codes;
  double ema;
  size_t epochs;
  size_t batch_size;
  double usage_threshold;
  uint64_t seed;
  double commitment_beta;
} MvqTrainConfig;

/**
 * Exact storage accounting for the three memory regimes. Byte totals are
 * rounded up from bits.
 */
typedef struct MvqStorageReport {
  uint64_t fid_bits_per_token;
  uint64_t lumen_bits_per_token;
  uint64_t lumen_vq_bits_per_token;
  uint64_t fid_total_bytes;
  uint64_t lumen_total_bytes;
  uint64_t lumen_vq_total_bytes;
  double compression_rate_vs_lumen;
} MvqStorageReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the current thread's most recent error; empty if none.
 */
const char *mvq_last_error_message(void);

/**
 * Fill `out` with the default training configuration.
 */
enum MvqStatus mvq_train_config_default(struct MvqTrainConfig *out);

/**
 * Train a codec on `n` vectors of dimension `d` and return an owned model.
 *
 * # Safety
 * `vectors` must point to `n * d` floats; `config` and `out_model` must be
 * valid pointers.
 */
enum MvqStatus mvq_fit(const float *vectors,
                       size_t n,
                       size_t d,
                       const struct MvqTrainConfig *config,
                       struct MvqModel **out_model);

/**
 * Compress `n` vectors of dimension `d` into an owned code matrix.
 *
 * # Safety
 * `model` must be a live handle; `vectors` must point to `n * d` floats.
 */
enum MvqStatus mvq_compress(const struct MvqModel *model,
                            const float *vectors,
                            size_t n,
                            size_t d,
                            struct MvqCodes **out_codes);

/**
 * Reconstruct vectors into `out`, which must hold `rows * dim` floats
 * (`out_len` is checked against that product).
 *
 * # Safety
 * `model` and `codes` must be live handles; `out` must point to `out_len`
 * writable floats.
 */
enum MvqStatus mvq_decompress(const struct MvqModel *model,
                              const struct MvqCodes *codes,
                              float *out,
                              size_t out_len);

/**
 * Mean squared reconstruction error of the model over `n` vectors.
 *
 * # Safety
 * `model` must be a live handle; `vectors` must point to `n * d` floats.
 */
enum MvqStatus mvq_recon_mse(const struct MvqModel *model,
                             const float *vectors,
                             size_t n,
                             size_t d,
                             double *out_mse);

/**
 * Write model and codes as a shard file; reports bytes written.
 *
 * # Safety
 * `path` must be a NUL-terminated string; handles must be live.
 */
enum MvqStatus mvq_write_shard(const char *path,
                               const struct MvqModel *model,
                               const struct MvqCodes *codes,
                               uint64_t *out_written);

/**
 * Read a shard file into owned model and codes handles.
 *
 * # Safety
 * `path` must be a NUL-terminated string; out-pointers must be valid.
 */
enum MvqStatus mvq_read_shard(const char *path,
                              struct MvqModel **out_model,
                              struct MvqCodes **out_codes);

/**
 * Exact storage accounting; fails with `Overflow` if a byte total exceeds
 * the 64-bit field.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MvqStatus mvq_storage_report(uint64_t tokens,
                                  uint64_t dim,
                                  uint64_t subspaces,
                                  uint64_t codes,
                                  struct MvqStorageReport *out);

/**
 * Vector dimension d of the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t mvq_model_dim(const struct MvqModel *model);

/**
 * Subspace count g of the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t mvq_model_subspaces(const struct MvqModel *model);

/**
 * Codes per subspace C of the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t mvq_model_code_count(const struct MvqModel *model);

/**
 * Number of compressed vectors in the code matrix.
 *
 * # Safety
 * `codes` must be a live handle.
 */
size_t mvq_codes_rows(const struct MvqCodes *codes);

/**
 * Subspace count of the code matrix.
 *
 * # Safety
 * `codes` must be a live handle.
 */
size_t mvq_codes_subspaces(const struct MvqCodes *codes);

/**
 * Release a model handle; null is a no-op.
 *
 * # Safety
 * `model` must have come from this library and not been freed before.
 */
void mvq_model_free(struct MvqModel *model);

/**
 * Release a codes handle; null is a no-op.
 *
 * # Safety
 * `codes` must have come from this library and not been freed before.
 */
void mvq_codes_free(struct MvqCodes *codes);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMVQ_H */
