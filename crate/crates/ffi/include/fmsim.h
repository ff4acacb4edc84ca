#ifndef FMSIM_H
#define FMSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum FmsimStatus {
  FMSIM_STATUS_OK = 0,
  FMSIM_STATUS_NULL_ARGUMENT = 1,
  FMSIM_STATUS_INVALID_ARGUMENT = 2,
  FMSIM_STATUS_PARSE_ERROR = 3,
  FMSIM_STATUS_SIMULATION_ERROR = 4,
  FMSIM_STATUS_IO_ERROR = 5,
  FMSIM_STATUS_OUT_OF_RANGE = 6,
  FMSIM_STATUS_PANIC = 7,
} FmsimStatus;

/**
 * A scenario configuration.
 */
typedef struct FmsimConfig FmsimConfig;

/**
 * The runs of one scenario.
 */
typedef struct FmsimResults FmsimResults;

/**
 * KPIs of one run. `lead_time_mean_ms` is NaN when no order completed.
 */
typedef struct FmsimKpis {
  uint64_t seed;
  uint32_t orders_released;
  uint32_t orders_completed;
  double lead_time_mean_ms;
  double throughput_per_hour;
  uint64_t makespan_ms;
  uint64_t failures;
  uint64_t machining_attempts;
  uint64_t protocol_violations;
} FmsimKpis;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on this thread.
 */
const char *fmsim_last_error(void);

/**
 * Library version, static.
 */
const char *fmsim_version(void);

/**
 * New configuration for `scenario` ("A" or "B") and `controller`
 * ("agents" or "conventional") with default settings.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
enum FmsimStatus fmsim_config_new(const char *scenario,
                                  const char *controller,
                                  struct FmsimConfig **out);

/**
 * Configuration read from settings-file text.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum FmsimStatus fmsim_config_from_text(const char *text, struct FmsimConfig **out);

/**
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void fmsim_config_free(struct FmsimConfig *config);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum FmsimStatus fmsim_config_set_orders(struct FmsimConfig *config, uint32_t orders);

/**
 * Runs with the first `runs` of `seeds`.
 *
 * # Safety
 * `config` must be a live handle and `seeds` point to `len` values.
 */
enum FmsimStatus fmsim_config_set_seeds(struct FmsimConfig *config,
                                        const uint64_t *seeds,
                                        size_t len,
                                        size_t runs);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum FmsimStatus fmsim_config_set_failures(struct FmsimConfig *config,
                                           double probability,
                                           uint64_t repair_ms);

/**
 * Runs every seed of `config`.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum FmsimStatus fmsim_run(const struct FmsimConfig *config, struct FmsimResults **out);

/**
 * # Safety
 * `results` must come from [`fmsim_run`] and not be used afterwards.
 */
void fmsim_results_free(struct FmsimResults *results);

/**
 * Number of runs; 0 for a null handle.
 *
 * # Safety
 * `results` must be a live handle or null.
 */
size_t fmsim_results_len(const struct FmsimResults *results);

/**
 * KPIs of run `index`.
 *
 * # Safety
 * `results` must be a live handle; `out` must be writable.
 */
enum FmsimStatus fmsim_results_kpis(const struct FmsimResults *results,
                                    size_t index,
                                    struct FmsimKpis *out);

/**
 * The results table as CSV; free it with [`fmsim_string_free`].
 *
 * # Safety
 * `results` must be a live handle; `out` must be writable.
 */
enum FmsimStatus fmsim_results_csv(const struct FmsimResults *results, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void fmsim_string_free(char *s);

/**
 * Parses and validates a NET or SETUP document of `len` bytes.
 *
 * # Safety
 * `xml` must point to `len` readable bytes.
 */
enum FmsimStatus fmsim_validate_model(const uint8_t *xml, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FMSIM_H */
