#ifndef MEDQA_EVAL_H
#define MEDQA_EVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum MedqaStatus {
  MEDQA_STATUS_OK = 0,
  MEDQA_STATUS_NULL_POINTER = 1,
  MEDQA_STATUS_INVALID_UTF8 = 2,
  MEDQA_STATUS_PARSE_ERROR = 3,
  MEDQA_STATUS_OUT_OF_RANGE = 4,
  MEDQA_STATUS_INVALID_ARGUMENT = 5,
  // A Rust panic was caught at the boundary.
  MEDQA_STATUS_INTERNAL = 6,
} MedqaStatus;

typedef enum MedqaVariant {
  MEDQA_VARIANT_GESTALT = 0,
  MEDQA_VARIANT_LCS_RATIO = 1,
} MedqaVariant;

typedef enum MedqaLanguage {
  MEDQA_LANGUAGE_JA = 0,
  MEDQA_LANGUAGE_EN = 1,
} MedqaLanguage;

// A parsed dataset.
typedef struct MedqaDataset MedqaDataset;

// Scoring settings. Zero-initialised means gestalt, trim only, no label
// matching.
typedef struct MedqaScoringOptions {
  enum MedqaVariant variant;
  bool nfkc;
  bool accept_label_match;
} MedqaScoringOptions;

// Per-question scores.
typedef struct MedqaEvalResult {
  // ASCII label of the closest choice, e.g. 'a'.
  char mapped_choice;
  bool accuracy_hit;
  bool exact_match_hit;
  double gestalt_value;
} MedqaEvalResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, statically allocated; do not free.
const char *medqa_version(void);

// Description of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread; do not free.
const char *medqa_last_error(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void medqa_string_free(char *s);

// Similarity of two NUL-terminated UTF-8 strings, in [0, 1].
//
// # Safety
// `a` and `b` must be valid C strings; `out` must be writable.
enum MedqaStatus medqa_similarity(const char *a,
                                  const char *b,
                                  enum MedqaVariant variant,
                                  bool nfkc,
                                  double *out);

// Parses a dataset (JSON array or JSON Lines). On success `*out` receives a
// handle to release with `medqa_dataset_free`.
//
// # Safety
// `data` must point to `len` readable bytes; `name` must be a valid C
// string; `out` must be writable.
enum MedqaStatus medqa_dataset_parse(const uint8_t *data,
                                     uintptr_t len,
                                     const char *name,
                                     struct MedqaDataset **out);

// Releases a dataset handle. NULL is ignored.
//
// # Safety
// `ds` must come from `medqa_dataset_parse` and not have been freed.
void medqa_dataset_free(struct MedqaDataset *ds);

// Number of questions; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
uintptr_t medqa_dataset_len(const struct MedqaDataset *ds);

// Label of the choice closest to `response` for question `index`.
//
// # Safety
// `ds` must be a live handle, `response` a valid C string, `out` writable.
enum MedqaStatus medqa_closest_choice(const struct MedqaDataset *ds,
                                      uintptr_t index,
                                      const char *response,
                                      enum MedqaVariant variant,
                                      bool nfkc,
                                      char *out);

// Scores one response against question `index`. `options` may be NULL for
// defaults.
//
// # Safety
// `ds` must be a live handle, `response` a valid C string, `options` NULL
// or readable, `out` writable.
enum MedqaStatus medqa_evaluate(const struct MedqaDataset *ds,
                                uintptr_t index,
                                const char *response,
                                const struct MedqaScoringOptions *options,
                                struct MedqaEvalResult *out);

// Renders the built-in prompt for question `index`. A negative
// `exemplar_index` gives a 0-shot prompt; otherwise that question of the
// same dataset is used as the 1-shot example. `*out` must be freed with
// `medqa_string_free`.
//
// # Safety
// `ds` must be a live handle and `out` writable.
enum MedqaStatus medqa_render_prompt(const struct MedqaDataset *ds,
                                     uintptr_t index,
                                     enum MedqaLanguage language,
                                     intptr_t exemplar_index,
                                     char **out);

// Parses a generation reply into instruction pairs. `*out` receives a JSON
// object `{"pairs": [...], "rejections": [...], "counts": {...}}` to be
// freed with `medqa_string_free`.
//
// # Safety
// `reply` and `source_ref` must be valid C strings; `out` writable.
enum MedqaStatus medqa_parse_pairs(const char *reply, const char *source_ref, char **out);

// Position of the question with `problem_id`, or -1.
//
// # Safety
// `ds` must be NULL or a live handle; `problem_id` NULL or a valid C
// string.
intptr_t medqa_dataset_find(const struct MedqaDataset *ds, const char *problem_id);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDQA_EVAL_H */
