#ifndef MODGLUE_H
#define MODGLUE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The first four match the CLI exit codes.
 */
typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_INVALID_INPUT = 1,
  MG_STATUS_CHECK_FAILED = 2,
  MG_STATUS_PARSE_ERROR = 3,
  MG_STATUS_NULL_POINTER = 4,
  MG_STATUS_WRONG_KIND = 5,
  MG_STATUS_PANIC = 6,
} MgStatus;

typedef enum MgKind {
  MG_KIND_MODULE = 0,
  MG_KIND_GLUING = 1,
  MG_KIND_BIMODULE = 2,
  MG_KIND_BIMODULE_DATUM = 3,
} MgKind;

typedef enum MgTwist {
  MG_TWIST_COHERENT = 0,
  MG_TWIST_RANDOM_UNITARY = 1,
} MgTwist;

/**
 * Opaque instance handle.
 */
typedef struct MgInstance MgInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library; static, do not free.
 */
const char *mg_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Free with
 * [`mg_string_free`].
 */
char *mg_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void mg_string_free(char *s);

/**
 * # Safety
 * `inst` must be NULL or a handle returned by this library and not yet freed.
 */
void mg_instance_free(struct MgInstance *inst);

/**
 * Parses a JSON instance.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum MgStatus mg_instance_parse(const char *json, struct MgInstance **out);

/**
 * Reads a JSON instance from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MgStatus mg_instance_load(const char *path, struct MgInstance **out);

/**
 * Generates an instance with the default bounds.
 *
 * # Safety
 * `out` must be writable.
 */
enum MgStatus mg_instance_generate(enum MgKind kind,
                                   uint64_t seed,
                                   enum MgTwist twist,
                                   struct MgInstance **out);

/**
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MgStatus mg_instance_kind(const struct MgInstance *inst, enum MgKind *out);

/**
 * Serializes to JSON; free the result with [`mg_string_free`].
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MgStatus mg_instance_to_json(const struct MgInstance *inst, char **out);

/**
 * Runs the validators. `passed` is set when every required check passes;
 * `max_residual` is the largest residual among them (infinite if a check
 * produced none).
 *
 * # Safety
 * `inst` must be a live handle; the out pointers must be writable.
 */
enum MgStatus mg_validate(const struct MgInstance *inst,
                          double tol,
                          bool *passed,
                          double *max_residual);

/**
 * Pulls a module instance apart into a gluing datum.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MgStatus mg_pull_apart(const struct MgInstance *inst, struct MgInstance **out);

/**
 * Glues a gluing datum into a module instance over the same cover.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MgStatus mg_glue(const struct MgInstance *inst, double tol, struct MgInstance **out);

/**
 * Largest residual of the descent identities on a gluing datum; dimension
 * mismatches count as infinite. `samples` random vectors are drawn from
 * `seed`.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MgStatus mg_descent_check(const struct MgInstance *inst,
                               double tol,
                               uint64_t seed,
                               size_t samples,
                               double *out);

/**
 * `max |f − 1|` over the obstruction scalars of a bimodule datum.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MgStatus mg_obstruction_deviation(const struct MgInstance *inst, double tol, double *out);

/**
 * Glues a bimodule datum into an equivalence bimodule.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MgStatus mg_morita_glue(const struct MgInstance *inst, double tol, struct MgInstance **out);

/**
 * Conjugates the bimodule datum `m` over `(A′, A′)` by `d` over `(A′, A)`.
 *
 * # Safety
 * `d` and `m` must be live handles; `out` must be writable.
 */
enum MgStatus mg_picard_conjugate(const struct MgInstance *d,
                                  const struct MgInstance *m,
                                  double tol,
                                  struct MgInstance **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODGLUE_H */
