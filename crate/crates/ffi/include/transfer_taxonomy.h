#ifndef TRANSFER_TAXONOMY_H
#define TRANSFER_TAXONOMY_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TtStatus {
  TT_STATUS_OK = 0,
  TT_STATUS_INFEASIBLE = 1,
  TT_STATUS_SCHEMA = 2,
  TT_STATUS_IMAGE_SET = 3,
  TT_STATUS_CONVERGENCE = 4,
  TT_STATUS_UNKNOWN_TASK = 5,
  TT_STATUS_NULL_POINTER = 6,
  TT_STATUS_INVALID_UTF8 = 7,
  TT_STATUS_PANIC = 8,
} TtStatus;

typedef enum TtCostMode {
  TT_COST_MODE_NODES = 0,
  TT_COST_MODE_EDGES = 1,
} TtCostMode;

typedef struct TtAffinity TtAffinity;

typedef struct TtDictionary TtDictionary;

typedef struct TtTaxonomy TtTaxonomy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *tt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tt_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void tt_string_free(char *s);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TtStatus tt_dictionary_from_json(const char *json, struct TtDictionary **out);

/**
 * # Safety
 * `dict` must be NULL or a handle from this library, freed at most once.
 */
void tt_dictionary_free(struct TtDictionary *dict);

/**
 * Number of tasks in the dictionary, 0 for NULL.
 *
 * # Safety
 * `dict` must be NULL or a live handle.
 */
size_t tt_dictionary_len(const struct TtDictionary *dict);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TtStatus tt_affinity_from_json(const char *json, struct TtAffinity **out);

/**
 * # Safety
 * `affinity` must be a live handle; `out` must be writable.
 */
enum TtStatus tt_affinity_to_json(const struct TtAffinity *affinity, char **out);

/**
 * # Safety
 * `affinity` must be NULL or a handle from this library, freed at most once.
 */
void tt_affinity_free(struct TtAffinity *affinity);

/**
 * Affinities from newline-delimited JSON records. A `max_order` of 0 means
 * the highest recorded order.
 *
 * # Safety
 * `dict` must be a live handle, `records_ndjson` NUL-terminated, `out`
 * writable.
 */
enum TtStatus tt_normalize(const struct TtDictionary *dict,
                           const char *records_ndjson,
                           size_t max_order,
                           size_t beam_width,
                           struct TtAffinity **out);

/**
 * Optimal taxonomy with unit costs and importances.
 *
 * # Safety
 * `affinity` and `dict` must be live handles; `out` must be writable.
 */
enum TtStatus tt_solve(const struct TtAffinity *affinity,
                       const struct TtDictionary *dict,
                       double budget,
                       size_t max_order,
                       enum TtCostMode cost_mode,
                       struct TtTaxonomy **out);

/**
 * Optimal taxonomy for a JSON request with the fields `budget`,
 * `max_order`, `importance`, `costs` and `cost_mode`.
 *
 * # Safety
 * `affinity` and `dict` must be live handles, `request_json`
 * NUL-terminated, `out` writable.
 */
enum TtStatus tt_solve_request(const struct TtAffinity *affinity,
                               const struct TtDictionary *dict,
                               const char *request_json,
                               struct TtTaxonomy **out);

/**
 * # Safety
 * `taxonomy` must be a live handle; `out` must be writable.
 */
enum TtStatus tt_taxonomy_to_json(const struct TtTaxonomy *taxonomy, char **out);

/**
 * Objective of the taxonomy, NaN for NULL.
 *
 * # Safety
 * `taxonomy` must be NULL or a live handle.
 */
double tt_taxonomy_objective(const struct TtTaxonomy *taxonomy);

/**
 * # Safety
 * `taxonomy` must be NULL or a handle from this library, freed at most once.
 */
void tt_taxonomy_free(struct TtTaxonomy *taxonomy);

/**
 * Principal eigenvector, summing to 1, of the positive row-major `n x n`
 * matrix at `matrix`, written to the `n` doubles at `out`.
 *
 * # Safety
 * `matrix` must hold `n * n` readable doubles and `out` `n` writable ones.
 */
enum TtStatus tt_principal_eigenvector(const double *matrix, size_t n, double *out);

/**
 * Spearman's rho between two scorings of the same `n` items.
 *
 * # Safety
 * `a` and `b` must hold `n` readable doubles; `out` must be writable.
 */
enum TtStatus tt_spearman(const double *a, const double *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRANSFER_TAXONOMY_H */
