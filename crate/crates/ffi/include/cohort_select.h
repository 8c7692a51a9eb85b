#ifndef COHORT_SELECT_H
#define COHORT_SELECT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define CS_OK 0

#define CS_ERR_NULL 1

#define CS_ERR_INVALID 2

#define CS_ERR_INFEASIBLE 3

/*
 The result handle is still written; it holds the best iterate found.
 */
#define CS_ERR_NOT_CONVERGED 4

#define CS_ERR_IO 5

#define CS_ERR_PANIC 6

/*
 The outcome of one optimizer run.
 */
typedef struct CsSolveResult CsSolveResult;

/*
 A loaded population and its stratification.
 */
typedef struct CsStudy CsStudy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 The message of the last failed call on this thread, or null. The pointer
 stays valid until the next call on the same thread.
 */
const char *cs_last_error_message(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void cs_string_free(char *s);

/*
 Library version as a static string.
 */
const char *cs_version(void);

/*
 Loads a CSV population and stratifies it by the characteristics in
 `schemas_json` (a JSON array of characteristic schemas).

 # Safety
 Strings must be NUL-terminated; `out` must be writable.
 */
int32_t cs_study_load(const char *csv_path,
                      const char *id_column,
                      const char *schemas_json,
                      struct CsStudy **out);

/*
 # Safety
 `study` must come from [`cs_study_load`] and not have been freed.
 */
void cs_study_free(struct CsStudy *study);

/*
 Population size and number of strata.

 # Safety
 `study` must be a live handle; outputs may be null.
 */
int32_t cs_study_shape(const struct CsStudy *study, size_t *subjects, size_t *strata);

/*
 Writes the joint initial distribution into `out[..len]`.

 # Safety
 `study` must be a live handle and `out` must hold `len` doubles.
 */
int32_t cs_study_joint_initial(const struct CsStudy *study, double *out, size_t len);

/*
 Per-stratum capacity caps `init_h / n`.

 # Safety
 `study` must be a live handle and `out` must hold `len` doubles.
 */
int32_t cs_study_caps(const struct CsStudy *study, size_t sample_size, double *out, size_t len);

/*
 Solves the fixed problem for a given joint ideal and caps of length `d`.
 `multistart` = 0 picks the default.

 # Safety
 `joint_ideal` and `caps` must hold `d` doubles; `out` must be writable.
 */
int32_t cs_solve_fixed(const double *joint_ideal,
                       const double *caps,
                       size_t d,
                       size_t sample_size,
                       uint64_t seed,
                       size_t multistart,
                       struct CsSolveResult **out);

/*
 Runs the optimizer on an ideal spec (JSON) over the study's strata. Fixed,
 range and generalized specs are all accepted.

 # Safety
 `study` must be a live handle, `spec_json` NUL-terminated and `out`
 writable.
 */
int32_t cs_solve_spec(const struct CsStudy *study,
                      const char *spec_json,
                      uint64_t seed,
                      size_t multistart,
                      struct CsSolveResult **out);

/*
 # Safety
 `result` must come from a solve call and not have been freed.
 */
void cs_result_free(struct CsSolveResult *result);

/*
 Number of strata in the result.

 # Safety
 `result` must be a live handle or null.
 */
size_t cs_result_dimension(const struct CsSolveResult *result);

/*
 Cosine distance of the result to its joint ideal; NaN for null.

 # Safety
 `result` must be a live handle or null.
 */
double cs_result_objective(const struct CsSolveResult *result);

/*
 # Safety
 `result` must be a live handle or null.
 */
bool cs_result_converged(const struct CsSolveResult *result);

/*
 # Safety
 `result` must be a live handle and `out` must hold `len` doubles.
 */
int32_t cs_result_fractions(const struct CsSolveResult *result, double *out, size_t len);

/*
 # Safety
 `result` must be a live handle and `out` must hold `len` doubles.
 */
int32_t cs_result_joint_ideal(const struct CsSolveResult *result, double *out, size_t len);

/*
 The full result as JSON; release with [`cs_string_free`].

 # Safety
 `result` must be a live handle and `out` writable.
 */
int32_t cs_result_to_json(const struct CsSolveResult *result, char **out);

/*
 Runs a baseline (`psrs`, `neyman`, `ra` or `wrs`) on a fixed or range
 spec and writes its allocation as JSON. `neyman_column` names the numeric
 column used by `neyman` and may otherwise be null. `step` is the lattice
 step for ranged marginals.

 # Safety
 `study` must be a live handle, strings NUL-terminated and `out` writable.
 */
int32_t cs_baseline_json(const struct CsStudy *study,
                         const char *method,
                         const char *spec_json,
                         const char *neyman_column,
                         double step,
                         uint64_t seed,
                         char **out);

/*
 Largest-remainder counts for `fractions` under per-stratum `caps`.

 # Safety
 `fractions`, `caps` and `out_counts` must each hold `d` elements.
 */
int32_t cs_apportion(const double *fractions,
                     const size_t *caps,
                     size_t d,
                     size_t n,
                     size_t *out_counts);

/*
 `1 - cos(u, v)`.

 # Safety
 `u` and `v` must hold `len` doubles; `out` must be writable.
 */
int32_t cs_cosine_distance(const double *u, const double *v, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COHORT_SELECT_H */
