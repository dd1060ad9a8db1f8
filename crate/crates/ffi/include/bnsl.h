#ifndef BNSL_H
#define BNSL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum BnslStatus {
  BNSL_STATUS_OK = 0,
  BNSL_STATUS_NULL_POINTER = 1,
  BNSL_STATUS_INVALID_ARGUMENT = 2,
  BNSL_STATUS_IO = 3,
  BNSL_STATUS_PARSE = 4,
  BNSL_STATUS_RANGE = 5,
  BNSL_STATUS_CORRUPT = 6,
  BNSL_STATUS_CYCLIC = 7,
  BNSL_STATUS_INCONSISTENT = 8,
  BNSL_STATUS_UNREACHABLE = 9,
  BNSL_STATUS_REFUSED = 10,
  BNSL_STATUS_PANIC = 99,
} BnslStatus;

/**
 * Opaque dataset handle.
 */
typedef struct BnslDataset BnslDataset;

/**
 * Opaque network handle.
 */
typedef struct BnslNetwork BnslNetwork;

/**
 * Search settings for `bnsl_learn`. Fill with `bnsl_learn_options_default`
 * before changing individual fields.
 */
typedef struct BnslLearnOptions {
  /**
   * Working directory (UTF-8, NUL-terminated). Required.
   */
  const char *workdir;
  /**
   * In-RAM node budget per duplicate-detection table; at least 1.
   */
  uint64_t max_ram_nodes;
  /**
   * Use `upper` instead of the greedy bound when true.
   */
  bool has_upper;
  double upper;
  /**
   * Restrict parent graphs to sets surviving in the order graph.
   */
  bool parent_pruning;
  uint32_t beam;
  uint32_t max_iters;
  uint64_t seed;
} BnslLearnOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *bnsl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bnsl_version(void);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum BnslStatus bnsl_learn_options_default(struct BnslLearnOptions *out);

/**
 * Loads and preprocesses a delimited file. Records containing `missing`
 * are dropped; columns with more than `max_states` states are binarized.
 *
 * # Safety
 * `path` and `missing` must be NUL-terminated strings; `out` must be valid
 * for writes.
 */
enum BnslStatus bnsl_dataset_load_csv(const char *path,
                                      uint8_t delimiter,
                                      const char *missing,
                                      bool has_header,
                                      uint32_t max_states,
                                      struct BnslDataset **out);

/**
 * Builds a dataset from row-major coded values; arity of each column is
 * its largest value plus one.
 *
 * # Safety
 * `values` must point to `records * vars` readable values; `out` must be
 * valid for writes.
 */
enum BnslStatus bnsl_dataset_from_values(const uint32_t *values,
                                         size_t records,
                                         size_t vars,
                                         struct BnslDataset **out);

/**
 * # Safety
 * `d` must be null or a handle from this library not yet freed.
 */
void bnsl_dataset_free(struct BnslDataset *d);

/**
 * # Safety
 * `d` must be a live dataset handle; outputs must be valid for writes.
 */
enum BnslStatus bnsl_dataset_shape(const struct BnslDataset *d, size_t *vars, size_t *records);

/**
 * Learns an optimal network.
 *
 * # Safety
 * `d` must be a live dataset handle, `opts` a valid options struct and
 * `out` valid for writes.
 */
enum BnslStatus bnsl_learn(const struct BnslDataset *d,
                           const struct BnslLearnOptions *opts,
                           struct BnslNetwork **out);

/**
 * Reference solver by dynamic programming over subsets (at most 15
 * variables).
 *
 * # Safety
 * `d` must be a live dataset handle; `out` valid for writes.
 */
enum BnslStatus bnsl_dp_optimal(const struct BnslDataset *d, struct BnslNetwork **out);

/**
 * # Safety
 * `net` must be null or a handle from this library not yet freed.
 */
void bnsl_network_free(struct BnslNetwork *net);

/**
 * # Safety
 * `net` must be a live network handle; `vars` and `score` valid for writes.
 */
enum BnslStatus bnsl_network_summary(const struct BnslNetwork *net, size_t *vars, double *score);

/**
 * Parent set of `var` as a bit mask (bit i set = variable i is a parent).
 *
 * # Safety
 * `net` must be a live network handle; `mask` valid for writes.
 */
enum BnslStatus bnsl_network_parents(const struct BnslNetwork *net, size_t var, uint64_t *mask);

/**
 * MDL score of the structure given as one parent mask per variable.
 *
 * # Safety
 * `d` must be a live dataset handle, `masks` must point to `len` values and
 * `score` must be valid for writes.
 */
enum BnslStatus bnsl_score_network(const struct BnslDataset *d,
                                   const uint64_t *masks,
                                   size_t len,
                                   double *score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BNSL_H */
