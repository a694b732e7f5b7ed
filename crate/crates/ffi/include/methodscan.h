#ifndef METHODSCAN_H
#define METHODSCAN_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_UTF8 = 2,
  MS_STATUS_INVALID_ARGUMENT = 3,
  MS_STATUS_NOT_FOUND = 4,
  MS_STATUS_IO = 5,
  MS_STATUS_PANIC = 99,
} MsStatus;

/**
 * Verdict codes shared by voting and response parsing.
 */
typedef enum {
  MS_VERDICT_NO = 0,
  MS_VERDICT_YES = 1,
  MS_VERDICT_UNPARSEABLE = 2,
} MsVerdict;

typedef enum {
  MS_TOKEN_UNIT_WORD = 0,
  MS_TOKEN_UNIT_CHARACTER = 1,
} MsTokenUnit;

typedef struct MsBibliography MsBibliography;

typedef struct MsChunker MsChunker;

typedef struct MsChunks MsChunks;

typedef struct MsPromptRegistry MsPromptRegistry;

typedef struct {
  uint32_t yes_count;
  uint32_t no_count;
  /**
   * `MS_VERDICT_YES` or `MS_VERDICT_NO`.
   */
  int32_t decision;
} MsVoteTally;

typedef struct {
  uint32_t cores;
  /**
   * Watts per core.
   */
  double power_per_core;
  /**
   * Fraction in [0, 1].
   */
  double usage;
  /**
   * GB.
   */
  double memory;
  /**
   * Watts per GB.
   */
  double memory_power;
  double pue;
} MsHardwareProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Free with
 * `ms_string_free`.
 */
char *ms_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void ms_string_free(char *s);

/**
 * Cohen's kappa of two label series (0 = No, 1 = Yes) of length `len`.
 *
 * # Safety
 * `a` and `b` must point to `len` readable values; `out` must be writable.
 */
MsStatus ms_cohen_kappa(const int32_t *a, const int32_t *b, size_t len, double *out);

/**
 * Hard majority over `len` verdict codes; ties go to Yes when `tie_yes` is
 * non-zero.
 *
 * # Safety
 * `verdicts` must point to `len` readable values; `out` must be writable.
 */
MsStatus ms_majority_vote(const int32_t *verdicts, size_t len, int32_t tie_yes, MsVoteTally *out);

/**
 * Answer text with leading answer markers removed.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
MsStatus ms_strip_answer_markers(const char *text, char **out);

/**
 * Verdict code of a categorical-conversion reply.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
MsStatus ms_parse_categorical_response(const char *text, int32_t *out);

/**
 * The bundled templates.
 *
 * # Safety
 * `out` must be writable.
 */
MsStatus ms_prompt_registry_builtin(MsPromptRegistry **out);

/**
 * Bundled templates overridden by `<name>.txt` files in `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
MsStatus ms_prompt_registry_from_dir(const char *dir, MsPromptRegistry **out);

/**
 * Render template `name` (e.g. "keyword-extraction") with `n` key/value
 * bindings.
 *
 * # Safety
 * `keys` and `values` must each hold `n` NUL-terminated strings.
 */
MsStatus ms_prompt_registry_render(const MsPromptRegistry *registry,
                                   const char *name,
                                   const char *const *keys,
                                   const char *const *values,
                                   size_t n,
                                   char **out);

/**
 * # Safety
 * `registry` must be NULL or a handle from this library, freed once.
 */
void ms_prompt_registry_free(MsPromptRegistry *registry);

/**
 * Windows of `chunk_size` tokens sharing `overlap` tokens; `unit` is an
 * `MsTokenUnit`.
 *
 * # Safety
 * `out` must be writable.
 */
MsStatus ms_chunker_new(size_t chunk_size, size_t overlap, int32_t unit, MsChunker **out);

/**
 * Split `text` into overlapping windows.
 *
 * # Safety
 * `chunker` must be a live handle, `text` a NUL-terminated string and
 * `out` writable.
 */
MsStatus ms_chunker_split(const MsChunker *chunker, const char *text, MsChunks **out);

/**
 * # Safety
 * `chunker` must be NULL or a handle from this library, freed once.
 */
void ms_chunker_free(MsChunker *chunker);

/**
 * Number of chunks, 0 for NULL.
 *
 * # Safety
 * `chunks` must be NULL or a live handle.
 */
size_t ms_chunks_len(const MsChunks *chunks);

/**
 * Token offset, token count and text of chunk `index`. Any output pointer
 * may be NULL.
 *
 * # Safety
 * `chunks` must be a live handle; non-NULL outputs must be writable.
 */
MsStatus ms_chunks_get(const MsChunks *chunks,
                       size_t index,
                       size_t *start,
                       size_t *length,
                       char **text);

/**
 * # Safety
 * `chunks` must be NULL or a handle from this library, freed once.
 */
void ms_chunks_free(MsChunks *chunks);

/**
 * Parse BibTeX text. Entries without a DOI are counted as issues.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
MsStatus ms_bibliography_parse(const char *text, MsBibliography **out);

/**
 * Append the records of `other` to `bib`.
 *
 * # Safety
 * Both handles must be live and distinct.
 */
MsStatus ms_bibliography_extend(MsBibliography *bib, const MsBibliography *other);

/**
 * Keep the first record per DOI; returns how many were removed.
 *
 * # Safety
 * `bib` must be a live handle; `removed` may be NULL.
 */
MsStatus ms_bibliography_dedupe(MsBibliography *bib, size_t *removed);

/**
 * # Safety
 * `bib` must be NULL or a live handle.
 */
size_t ms_bibliography_len(const MsBibliography *bib);

/**
 * # Safety
 * `bib` must be NULL or a live handle.
 */
size_t ms_bibliography_issue_count(const MsBibliography *bib);

/**
 * Normalized DOI of record `index`.
 *
 * # Safety
 * `bib` must be a live handle; `out` must be writable.
 */
MsStatus ms_bibliography_doi(const MsBibliography *bib, size_t index, char **out);

/**
 * # Safety
 * `bib` must be NULL or a handle from this library, freed once.
 */
void ms_bibliography_free(MsBibliography *bib);

/**
 * 48-core Xeon Platinum 9242 defaults.
 */
MsHardwareProfile ms_hardware_xeon_platinum_9242(void);

/**
 * kWh for `runtime_h` hours on `profile`.
 *
 * # Safety
 * `profile` and `out` must be valid pointers.
 */
MsStatus ms_estimate_energy(double runtime_h, const MsHardwareProfile *profile, double *out);

/**
 * kg CO2e for `energy_kwh` at `intensity` kg/kWh.
 */
double ms_estimate_carbon(double energy_kwh, double intensity);

/**
 * # Safety
 * `out` must be writable.
 */
MsStatus ms_to_tree_months(double carbon_kg, double tree_month_constant, double *out);

/**
 * Default carbon intensity, kg CO2e per kWh.
 */
double ms_default_location_intensity(void);

/**
 * Default monthly sequestration of one tree, kg CO2e.
 */
double ms_default_tree_month_constant(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METHODSCAN_H */
