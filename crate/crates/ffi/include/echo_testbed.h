#ifndef ECHO_TESTBED_H
#define ECHO_TESTBED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EtStatus {
  ET_STATUS_OK = 0,
  ET_STATUS_NULL_ARGUMENT = 1,
  ET_STATUS_INVALID_UTF8 = 2,
  ET_STATUS_UNKNOWN_SCENARIO = 3,
  ET_STATUS_SCENARIO_PARSE = 4,
  ET_STATUS_SCENARIO_RUN = 5,
  ET_STATUS_INVALID_ARGUMENT = 6,
  ET_STATUS_AUTH = 7,
  ET_STATUS_REPLAY = 8,
  ET_STATUS_BUFFER_TOO_SMALL = 9,
  ET_STATUS_PANIC = 10,
  ET_STATUS_CRYPTO = 11,
} EtStatus;

/**
 * A finished scenario run.
 */
typedef struct EtRun EtRun;

/**
 * One SRTP direction.
 */
typedef struct EtSrtp EtSrtp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *et_version(void);

/**
 * Message for the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *et_last_error(void);

/**
 * Number of built-in scenarios.
 */
size_t et_scenario_count(void);

/**
 * Name of built-in scenario `index` as a static string, or null.
 */
const char *et_scenario_name(size_t index);

/**
 * Runs a built-in scenario. `use_default_seed` non-zero ignores `seed`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum EtStatus et_run_builtin(const char *name,
                             uint64_t seed,
                             int32_t use_default_seed,
                             struct EtRun **out);

/**
 * Runs a scenario given as JSON text with its own seed.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum EtStatus et_run_json(const char *json, struct EtRun **out);

/**
 * 1 if every assertion passed, 0 if not, -1 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
int32_t et_run_passed(const struct EtRun *run);

/**
 * Number of trace events.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t et_run_event_count(const struct EtRun *run);

/**
 * Number of assertion verdicts.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t et_run_verdict_count(const struct EtRun *run);

/**
 * Writes verdict `index` as "PASS name: detail" or "FAIL name: detail".
 *
 * # Safety
 * `run` must be a live handle; `out` must hold `cap` bytes; `out_len` must be writable.
 */
enum EtStatus et_run_verdict(const struct EtRun *run,
                             size_t index,
                             uint8_t *out,
                             size_t cap,
                             size_t *out_len);

/**
 * The trace as JSON lines, NUL-terminated, owned by the handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
const char *et_run_trace_jsonl(const struct EtRun *run);

/**
 * Hex SHA-256 of the JSON-lines trace, owned by the handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
const char *et_run_trace_hash(const struct EtRun *run);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void et_run_free(struct EtRun *run);

/**
 * Derives an SRTP context from a 32-byte master key and 14-byte salt.
 *
 * # Safety
 * `key` and `salt` must point to the given lengths; `out` must be writable.
 */
enum EtStatus et_srtp_new(const uint8_t *key,
                          size_t key_len,
                          const uint8_t *salt,
                          size_t salt_len,
                          uint32_t ssrc,
                          struct EtSrtp **out);

/**
 * Protects one payload. `out` needs `len + 22` bytes.
 *
 * # Safety
 * `ctx` must be a live handle; buffers must match their lengths.
 */
enum EtStatus et_srtp_protect(struct EtSrtp *ctx,
                              const uint8_t *payload,
                              size_t len,
                              uint8_t *out,
                              size_t cap,
                              size_t *out_len);

/**
 * Authenticates, replay-checks and decrypts one packet.
 *
 * # Safety
 * `ctx` must be a live handle; buffers must match their lengths.
 */
enum EtStatus et_srtp_unprotect(struct EtSrtp *ctx,
                                const uint8_t *packet,
                                size_t len,
                                uint8_t *out,
                                size_t cap,
                                size_t *out_len);

/**
 * # Safety
 * `ctx` must be null or a handle not yet freed.
 */
void et_srtp_free(struct EtSrtp *ctx);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECHO_TESTBED_H */
