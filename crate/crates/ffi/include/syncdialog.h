#ifndef SYNCDIALOG_H
#define SYNCDIALOG_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum SdStatus {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_INVALID_ARGUMENT = 2,
  SD_STATUS_CODEC = 3,
  SD_STATUS_MODEL = 4,
  SD_STATUS_GENERATION = 5,
  SD_STATUS_BUFFER_TOO_SMALL = 6,
  SD_STATUS_PANIC = 7,
} SdStatus;

/**
 * Deduplicated chunked dialogue.
 */
typedef struct SdDialogue SdDialogue;

/**
 * Add-alpha n-gram model.
 */
typedef struct SdModel SdModel;

/**
 * Token vocabulary: unit count, frame length and silence units.
 */
typedef struct SdVocab SdVocab;

/**
 * Sampling parameters. `top_k` 0 means no cut-off.
 */
typedef struct SdSamplerConfig {
  double temperature;
  size_t top_k;
  uint64_t seed;
  bool greedy;
} SdSamplerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sd_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length without the NUL, or 0
 * when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t sd_last_error_message(char *buf, size_t cap);

/**
 * # Safety
 * `silence` must point to `n_silence` tokens; `out` must be writable.
 */
enum SdStatus sd_vocab_new(uint32_t size,
                           uint32_t frame_ms,
                           const uint32_t *silence,
                           size_t n_silence,
                           struct SdVocab **out);

/**
 * The default vocabulary: 501 units, 40 ms frames, silence unit 0.
 *
 * # Safety
 * `out` must be writable.
 */
enum SdStatus sd_vocab_default(struct SdVocab **out);

/**
 * # Safety
 * `v` must come from this library and not be used afterwards.
 */
void sd_vocab_free(struct SdVocab *v);

/**
 * Writes the ids of the two speaker tags and the extended vocabulary size.
 *
 * # Safety
 * `v` must be a live handle; outputs must be writable.
 */
enum SdStatus sd_vocab_tags(const struct SdVocab *v,
                            uint32_t *tag_s0,
                            uint32_t *tag_s1,
                            size_t *extended_size);

/**
 * Frames per chunk, or `InvalidArgument` if `chunk_ms` is not a positive
 * multiple of the frame length.
 *
 * # Safety
 * `v` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_vocab_frames_per_chunk(const struct SdVocab *v, uint32_t chunk_ms, size_t *out);

/**
 * Chunks and deduplicates two full-rate streams of `n_frames` tokens each.
 * With `pad` non-zero a partial last chunk is filled with silence,
 * otherwise it is an error.
 *
 * # Safety
 * `s0` and `s1` must point to `n_frames` tokens; `v` must be live; `out`
 * must be writable.
 */
enum SdStatus sd_dialogue_from_streams(const struct SdVocab *v,
                                       const uint32_t *s0,
                                       const uint32_t *s1,
                                       size_t n_frames,
                                       uint32_t chunk_ms,
                                       bool pad,
                                       struct SdDialogue **out);

/**
 * Parses a wire-format token sequence.
 *
 * # Safety
 * `wire` must point to `len` tokens; `v` must be live; `out` must be
 * writable.
 */
enum SdStatus sd_dialogue_parse(const struct SdVocab *v,
                                const uint32_t *wire,
                                size_t len,
                                uint32_t chunk_ms,
                                struct SdDialogue **out);

/**
 * # Safety
 * `d` must come from this library and not be used afterwards.
 */
void sd_dialogue_free(struct SdDialogue *d);

/**
 * # Safety
 * `d` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_dialogue_num_chunks(const struct SdDialogue *d, size_t *out);

/**
 * Writes the wire-format token sequence.
 *
 * # Safety
 * `d` must be live; `buf` must hold `cap` tokens; `out_len` must be
 * writable.
 */
enum SdStatus sd_dialogue_flatten(const struct SdDialogue *d,
                                  uint32_t *buf,
                                  size_t cap,
                                  size_t *out_len);

/**
 * Rebuilds full-rate streams. Both buffers hold `cap` tokens; the frame
 * count goes to `out_frames`.
 *
 * # Safety
 * `d` must be live; `s0` and `s1` must hold `cap` tokens; `out_frames` must
 * be writable.
 */
enum SdStatus sd_dialogue_interpolate(const struct SdDialogue *d,
                                      uint32_t *s0,
                                      uint32_t *s1,
                                      size_t cap,
                                      size_t *out_frames);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SdStatus sd_model_load(const char *path, struct SdModel **out);

/**
 * Trains a model on the wire sequences of `dialogues`.
 *
 * # Safety
 * `dialogues` must point to `n` live dialogue handles; `out` must be
 * writable.
 */
enum SdStatus sd_model_train(const struct SdDialogue *const *dialogues,
                             size_t n,
                             size_t order,
                             double alpha,
                             bool backoff,
                             struct SdModel **out);

/**
 * Saves a model file.
 *
 * # Safety
 * `m` must be live; `path` must be a NUL-terminated string.
 */
enum SdStatus sd_model_save(const struct SdModel *m, const char *path);

/**
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void sd_model_free(struct SdModel *m);

/**
 * Next-token distribution after `context`; `buf` receives
 * extended-vocabulary-size probabilities.
 *
 * # Safety
 * `m` must be live; `context` must hold `len` tokens; `buf` must hold `cap`
 * doubles; `out_len` must be writable.
 */
enum SdStatus sd_model_next_dist(const struct SdModel *m,
                                 const uint32_t *context,
                                 size_t len,
                                 double *buf,
                                 size_t cap,
                                 size_t *out_len);

/**
 * Perplexity of a token sequence.
 *
 * # Safety
 * `m` must be live; `seq` must hold `len` tokens; `out` must be writable.
 */
enum SdStatus sd_model_perplexity(const struct SdModel *m,
                                  const uint32_t *seq,
                                  size_t len,
                                  double *out);

/**
 * Appends `n_chunks` generated chunks to `prompt`. With `error_on_overflow`
 * an over-long chunk fails instead of being cut short.
 *
 * # Safety
 * `m` and `prompt` must be live; `out` must be writable.
 */
enum SdStatus sd_continue(const struct SdModel *m,
                          const struct SdDialogue *prompt,
                          size_t n_chunks,
                          struct SdSamplerConfig sampler,
                          bool error_on_overflow,
                          struct SdDialogue **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYNCDIALOG_H */
