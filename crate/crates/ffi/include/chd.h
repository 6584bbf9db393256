/* C interface of the Cahn-Hilliard-Darcy solver. Generated; do not edit. */

#ifndef CHD_H
#define CHD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ChdStatus {
  /**
   * Success.
   */
  ChdStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  ChdStatus_NullArgument = 1,
  /**
   * An argument failed a structural check (bad mode name, wrong length).
   */
  ChdStatus_InvalidArgument = 2,
  /**
   * A string argument was not valid UTF-8.
   */
  ChdStatus_Utf8 = 3,
  /**
   * The run description was rejected (parse, validation, file access).
   */
  ChdStatus_Config = 4,
  /**
   * The solver or one of its checks failed at runtime.
   */
  ChdStatus_Solver = 5,
  /**
   * A panic was caught at the boundary; the handle state is unspecified.
   */
  ChdStatus_Panic = 6,
} ChdStatus;

/**
 * Opaque parsed run configuration.
 */
typedef struct ChdConfig {
  uint8_t _opaque[0];
} ChdConfig;

/**
 * Opaque forward simulation result.
 */
typedef struct ChdSimulation {
  uint8_t _opaque[0];
} ChdSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the library, a static NUL-terminated string.
 */
const char *chd_version(void);

/**
 * Copies the most recent error message of this thread into `buf`
 * (NUL-terminated, truncated to `cap`). Returns the full length in bytes
 * including the NUL, so callers can retry with a larger buffer. A null or
 * zero-capacity buffer only queries the length.
 */
size_t chd_last_error(char *buf, size_t cap);

/**
 * Parses and validates a config file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string, `out` a valid pointer.
 */
enum ChdStatus chd_config_parse(const char *path, struct ChdConfig **out);

/**
 * Parses config text directly; relative file references resolve against
 * `base_dir` (pass "." when unused).
 *
 * # Safety
 * `text` and `base_dir` must be valid NUL-terminated strings, `out` a
 * valid pointer.
 */
enum ChdStatus chd_config_parse_text(const char *text,
                                     const char *base_dir,
                                     struct ChdConfig **out);

/**
 * Overrides the seed recorded in the config.
 *
 * # Safety
 * `cfg` must be a live handle from a `chd_config_parse*` call.
 */
enum ChdStatus chd_config_set_seed(struct ChdConfig *cfg, uint64_t seed);

/**
 * Releases a config handle. Null is a no-op.
 *
 * # Safety
 * `cfg` must be a handle from a `chd_config_parse*` call, freed once.
 */
void chd_config_free(struct ChdConfig *cfg);

/**
 * Runs one batch mode ("simulate", "optimize", "grad-check",
 * "hessian-check", "energy-audit"), writing artifacts under `out_dir`.
 * `verified` (optional) receives the mode's own pass/fail verdict.
 *
 * # Safety
 * `cfg` must be a live config handle; `mode` and `out_dir` valid strings;
 * `verified` null or valid for writes.
 */
enum ChdStatus chd_run_mode(const struct ChdConfig *cfg,
                            const char *mode,
                            const char *out_dir,
                            bool *verified);

/**
 * Runs the forward solver described by the config and hands back the full
 * trajectory.
 *
 * # Safety
 * `cfg` must be a live config handle, `out` a valid pointer.
 */
enum ChdStatus chd_simulate(const struct ChdConfig *cfg, struct ChdSimulation **out);

/**
 * Number of stored time levels (steps + 1), 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or a live simulation handle.
 */
size_t chd_simulation_levels(const struct ChdSimulation *sim);

/**
 * Grid dimensions of a simulation.
 *
 * # Safety
 * `sim` must be a live simulation handle; `nx`, `ny` valid for writes.
 */
enum ChdStatus chd_simulation_grid(const struct ChdSimulation *sim, size_t *nx, size_t *ny);

/**
 * Physical time of a level.
 *
 * # Safety
 * `sim` must be a live simulation handle, `out` valid for writes.
 */
enum ChdStatus chd_simulation_time(const struct ChdSimulation *sim, size_t level, double *out);

/**
 * Ginzburg-Landau energy at a level.
 *
 * # Safety
 * `sim` must be a live simulation handle, `out` valid for writes.
 */
enum ChdStatus chd_simulation_energy(const struct ChdSimulation *sim, size_t level, double *out);

/**
 * Spatial mean of the phase field at a level.
 *
 * # Safety
 * `sim` must be a live simulation handle, `out` valid for writes.
 */
enum ChdStatus chd_simulation_mean(const struct ChdSimulation *sim, size_t level, double *out);

/**
 * Copies the phase field of a level into `buf` (row-major, `len` must be
 * exactly nx*ny).
 *
 * # Safety
 * `sim` must be a live simulation handle; `buf` valid for `len` writes.
 */
enum ChdStatus chd_simulation_phi(const struct ChdSimulation *sim,
                                  size_t level,
                                  double *buf,
                                  size_t len);

/**
 * Releases a simulation handle. Null is a no-op.
 *
 * # Safety
 * `sim` must be a handle from `chd_simulate`, freed once.
 */
void chd_simulation_free(struct ChdSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHD_H */
