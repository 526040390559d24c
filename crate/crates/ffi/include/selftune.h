#ifndef SELFTUNE_H
#define SELFTUNE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of a fallible call.
typedef enum StStatus {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_POINTER = 1,
  ST_STATUS_INVALID_UTF8 = 2,
  ST_STATUS_VALIDATION = 3,
  ST_STATUS_DOMAIN_VIOLATION = 4,
  ST_STATUS_INTEGRATION = 5,
  ST_STATUS_INFEASIBLE = 6,
  ST_STATUS_HYPOTHESIS = 7,
  ST_STATUS_BUFFER_TOO_SMALL = 8,
  ST_STATUS_IO = 9,
  ST_STATUS_PANIC = 10,
} StStatus;

// Completed simulation: trajectory and report.
typedef struct StRun StRun;

// Parsed and validated scenario.
typedef struct StScenario StScenario;

// Floquet multipliers of the averaged-coefficient periodic system.
typedef struct StFloquet {
  double multipliers_re[2];
  double multipliers_im[2];
  double spectral_radius;
  double det;
  double liouville_det;
  double period;
} StFloquet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *st_last_error(void);

// Free a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void st_string_free(char *s);

// Parse and validate a TOML scenario.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum StStatus st_scenario_from_toml(const char *toml, struct StScenario **out);

// # Safety
// `scenario` must come from [`st_scenario_from_toml`] and not have been freed.
void st_scenario_free(struct StScenario *scenario);

// # Safety
// `scenario` must be a live handle.
enum StStatus st_scenario_set_seed(struct StScenario *scenario, uint64_t seed);

// Integrate a scenario.
//
// # Safety
// `scenario` must be a live handle; `out` must be writable.
enum StStatus st_simulate(const struct StScenario *scenario, struct StRun **out);

// # Safety
// `run` must come from [`st_simulate`] and not have been freed.
void st_run_free(struct StRun *run);

// Number of samples; 0 for NULL.
//
// # Safety
// `run` must be NULL or a live handle.
size_t st_run_len(const struct StRun *run);

// State dimension (2 first-order, 3 oscillator); 0 for NULL.
//
// # Safety
// `run` must be NULL or a live handle.
size_t st_run_dim(const struct StRun *run);

// `|mu(T) - mu0|`; NaN for NULL.
//
// # Safety
// `run` must be NULL or a live handle.
double st_run_final_mu_error(const struct StRun *run);

// Copy the sample times into `buf` (`len >= st_run_len`).
//
// # Safety
// `buf` must point to `len` writable doubles.
enum StStatus st_run_copy_times(const struct StRun *run, double *buf, size_t len);

// Copy the states row-major into `buf` (`len >= st_run_len * st_run_dim`).
//
// # Safety
// `buf` must point to `len` writable doubles.
enum StStatus st_run_copy_states(const struct StRun *run, double *buf, size_t len);

// Run report as JSON; free with [`st_string_free`]. NULL for a NULL run.
//
// # Safety
// `run` must be NULL or a live handle.
char *st_run_report_json(const struct StRun *run);

// Write the trajectory CSV to `path`.
//
// # Safety
// `run` must be a live handle; `path` a NUL-terminated string.
enum StStatus st_run_write_csv(const struct StRun *run, const char *path);

// `1 - a/b^2`.
double st_positive_real_margin(double a, double b);

// Both sides of `u p + u^2 = -(sin phi cos phi p)^2` with `u = -sin^2(phi) p`.
//
// # Safety
// `lhs` and `rhs` must be writable.
enum StStatus st_sector_identity(double phi, double p, double *lhs, double *rhs);

// Floquet multipliers of `q' = sin^2(omega t) p, p' = -a q - b p`.
//
// # Safety
// `out` must be writable.
enum StStatus st_floquet(double a_eff, double b_eff, double omega, struct StFloquet *out);

// Quadratic storage `P = [[p[0], p[1]], [p[1], p[2]]]` certifying
// `V' <= u p + u^2` for `q' = -u, p' = -a q - b p`.
//
// # Safety
// `p_out` must point to 3 writable doubles.
enum StStatus st_kyp_storage(double a, double b, uint64_t seed, double *p_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELFTUNE_H */
