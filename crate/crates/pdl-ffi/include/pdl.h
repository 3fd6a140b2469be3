/* C interface to the PDL interpreter. */

#ifndef PDL_H
#define PDL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Parse/validation failures and evaluation
 * failures mirror the CLI exit codes.
 */
typedef enum PdlStatus {
  PDL_STATUS_OK = 0,
  PDL_STATUS_ERR_EVAL = 1,
  PDL_STATUS_ERR_PARSE = 2,
  PDL_STATUS_ERR_INVALID_ARG = 3,
  PDL_STATUS_ERR_PANIC = 4,
} PdlStatus;

/**
 * Opaque interpreter configuration. Created by [`pdl_interpreter_new`],
 * released by [`pdl_interpreter_free`]. Each run builds a fresh evaluation
 * from this configuration, so a handle can run many programs.
 */
typedef struct PdlInterpreter PdlInterpreter;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create an interpreter handle with default configuration.
 */
struct PdlInterpreter *pdl_interpreter_new(void);

/**
 * Release an interpreter handle. A null pointer is a no-op.
 *
 * # Safety
 * `interp` must come from [`pdl_interpreter_new`] and not be used after.
 */
void pdl_interpreter_free(struct PdlInterpreter *interp);

/**
 * Configure the interpreter. Keys: `base_dir`, `stdin_script`,
 * `until_polarity` (`example`/`appendix`), `max_iterations`, `sandbox`
 * (`true`/`false`), `backend.mock`, `backend.scripted` (path to a JSON
 * array of replies), `backend.openai` (base URL), `runner.<lang>` (command
 * line), `data.<name>` (JSON value), `context` (JSON array of
 * `{role, content}` messages).
 *
 * # Safety
 * `interp` must be a live handle; `key` and `value` must be valid
 * NUL-terminated UTF-8 strings.
 */
enum PdlStatus pdl_interpreter_set_option(struct PdlInterpreter *interp,
                                          const char *key,
                                          const char *value);

/**
 * Run a program from source text. On success, `*result_out` receives a
 * malloc'd JSON string `{"value": ..., "context": [...]}`; release it with
 * [`pdl_string_free`].
 *
 * # Safety
 * `interp` must be a live handle; `source` must be NUL-terminated UTF-8;
 * `result_out`, when non-null, must point to writable storage.
 */
enum PdlStatus pdl_run_source(struct PdlInterpreter *interp, const char *source, char **result_out);

/**
 * Run a program file, resolving includes relative to its directory.
 *
 * # Safety
 * As for [`pdl_run_source`].
 */
enum PdlStatus pdl_run_file(struct PdlInterpreter *interp, const char *path, char **result_out);

/**
 * Validate a document without running it. `*diagnostics_out` receives a
 * malloc'd JSON array (empty when the document is valid); release it with
 * [`pdl_string_free`]. Returns `PDL_ERR_PARSE` when diagnostics are
 * non-empty.
 *
 * # Safety
 * `source` must be NUL-terminated UTF-8; `diagnostics_out`, when non-null,
 * must point to writable storage.
 */
enum PdlStatus pdl_check_source(const char *source, char **diagnostics_out);

/**
 * The message of the most recent failure on this handle. Borrowed: valid
 * until the next call on the same handle; do not free.
 *
 * # Safety
 * `interp` must be a live handle.
 */
const char *pdl_last_error(const struct PdlInterpreter *interp);

/**
 * Release a string returned by this library. A null pointer is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pdl_string_free(char *s);

/**
 * The library version as a static string; do not free.
 */
const char *pdl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDL_H */
