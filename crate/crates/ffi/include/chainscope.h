#ifndef CHAINSCOPE_H
#define CHAINSCOPE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_INVALID_ARGUMENT = 3,
  CS_STATUS_IO = 4,
  CS_STATUS_CONFIG = 5,
  CS_STATUS_PIPELINE = 6,
  CS_STATUS_PANIC = 7,
} CsStatus;

/**
 * Pipeline configuration.
 */
typedef struct CsConfig CsConfig;

/**
 * Loaded dataset.
 */
typedef struct CsStore CsStore;

typedef struct CsRunSummary {
  uint64_t population;
  uint64_t malicious;
  /**
   * Sum over every (granularity, feature config) pair.
   */
  uint64_t suspects;
} CsRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next chainscope call on the same thread.
 */
const char *cs_last_error(void);

/**
 * Library version, static.
 */
const char *cs_version(void);

/**
 * Loads a dataset directory. `max_block` 0 accepts any block.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CsStatus cs_store_open(const char *dir, uint64_t max_block, struct CsStore **out);

/**
 * # Safety
 * `store` must come from [`cs_store_open`] and not be used afterwards.
 */
void cs_store_free(struct CsStore *store);

/**
 * # Safety
 * `store` must be a live handle and `out` a valid pointer.
 */
enum CsStatus cs_store_max_block(const struct CsStore *store, uint64_t *out);

/**
 * Number of known accounts, contracts and EOAs.
 *
 * # Safety
 * `store` must be a live handle and `out` a valid pointer.
 */
enum CsStatus cs_store_account_count(const struct CsStore *store, uint64_t *out);

/**
 * Whether `address` (0x-hex) is a contract: writes 1, 0 for an EOA.
 *
 * # Safety
 * `store` must be a live handle, `address` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum CsStatus cs_store_is_contract(const struct CsStore *store, const char *address, uint8_t *out);

/**
 * Segments of granularity `name` ("1day", "3day", "1month", "all") over
 * blocks `1..=max_block`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CsStatus cs_segment_count(const char *name, uint64_t max_block, uint64_t *out);

/**
 * Severity score of a set of distinct vulnerabilities given as letters,
 * one per vulnerability ("HMMLL"). Empty input scores 0.
 *
 * # Safety
 * `letters` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CsStatus cs_severity_score(const char *letters, double *out);

/**
 * Cosine similarity of two vectors of length `len`; 0 when either is zero.
 *
 * # Safety
 * `u` and `v` must point to `len` doubles and `out` be a valid pointer.
 */
enum CsStatus cs_cosine_similarity(const double *u, const double *v, size_t len, double *out);

/**
 * Loads a key=value config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CsStatus cs_config_load(const char *path, struct CsConfig **out);

/**
 * Config with defaults for `dataset`, writing to `out_dir`.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` a valid pointer.
 */
enum CsStatus cs_config_new(const char *dataset, const char *out_dir, struct CsConfig **out);

/**
 * Redirects the output directory.
 *
 * # Safety
 * `config` must be a live handle and `out_dir` a NUL-terminated string.
 */
enum CsStatus cs_config_set_out(struct CsConfig *config, const char *out_dir);

/**
 * # Safety
 * `config` must come from a `cs_config_*` constructor and not be used afterwards.
 */
void cs_config_free(struct CsConfig *config);

/**
 * Runs stages up to `stage` ("ingest" ... "report", or "run").
 *
 * # Safety
 * `config` must be a live handle, `stage` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum CsStatus cs_run_pipeline(const struct CsConfig *config,
                              const char *stage,
                              struct CsRunSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINSCOPE_H */
