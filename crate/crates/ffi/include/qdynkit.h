#ifndef QDYNKIT_H
#define QDYNKIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

typedef enum QdkStatus {
  QDK_STATUS_OK = 0,
  /**
   * invalid configuration or parameter
   */
  QDK_STATUS_CONFIG = 1,
  QDK_STATUS_SHAPE = 2,
  QDK_STATUS_NUMERIC = 3,
  /**
   * value outside a tabulated range
   */
  QDK_STATUS_RANGE = 4,
  QDK_STATUS_UNSUPPORTED = 5,
  /**
   * matrix larger than the dimension cap
   */
  QDK_STATUS_RESOURCE = 6,
  QDK_STATUS_IO = 7,
  /**
   * malformed file contents
   */
  QDK_STATUS_FORMAT = 8,
  QDK_STATUS_NULL_POINTER = 9,
  QDK_STATUS_INVALID_UTF8 = 10,
  /**
   * output buffer shorter than required
   */
  QDK_STATUS_BUFFER_TOO_SMALL = 11,
  /**
   * index or key not present
   */
  QDK_STATUS_NOT_FOUND = 12,
  /**
   * internal panic caught at the boundary
   */
  QDK_STATUS_PANIC = 13,
} QdkStatus;

typedef enum QdkMode {
  QDK_MODE_BOUND = 0,
  QDK_MODE_PROPA = 1,
  QDK_MODE_RELAX = 2,
  QDK_MODE_REPLAY = 3,
} QdkMode;

/**
 * Parsed and validated run configuration.
 */
typedef struct QdkConfig QdkConfig;

/**
 * Named scalar results of a run.
 */
typedef struct QdkSummary QdkSummary;

/**
 * Hamiltonian on a grid.
 */
typedef struct QdkSystem QdkSystem;

/**
 * Wavefunction on the grid of a system.
 */
typedef struct QdkWave QdkWave;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message. With `buf` NULL and
 * `len` 0 only `needed` is filled. The message is empty after a success.
 *
 * # Safety
 * `buf` must point to `len` writable bytes; `needed` may be NULL.
 */
enum QdkStatus qdk_last_error(char *buf, size_t len, size_t *needed);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qdk_version(void);

/**
 * Reads and validates a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `config` a valid pointer.
 */
enum QdkStatus qdk_config_load(const char *path, struct QdkConfig **config);

/**
 * Validates configuration text. Relative file names resolve against
 * `base_dir` (the current directory when NULL); `stem` names outputs.
 *
 * # Safety
 * String arguments must be NUL-terminated; `base_dir` may be NULL.
 */
enum QdkStatus qdk_config_parse(const char *text,
                                const char *base_dir,
                                const char *stem,
                                struct QdkConfig **config);

/**
 * Copies the resolved configuration, all defaults filled in, as TOML.
 *
 * # Safety
 * `config` must come from `qdk_config_load`/`qdk_config_parse`.
 */
enum QdkStatus qdk_config_echo(const struct QdkConfig *config,
                               char *buf,
                               size_t len,
                               size_t *needed);

/**
 * # Safety
 * `config` must be NULL or come from this library and not be used again.
 */
void qdk_config_free(struct QdkConfig *config);

/**
 * Runs a pipeline, writing its files below `out_dir`. `summary` receives
 * the run's named results.
 *
 * # Safety
 * `config` must be valid, `out_dir` NUL-terminated, `summary` writable.
 */
enum QdkStatus qdk_run(const struct QdkConfig *config,
                       enum QdkMode mode,
                       const char *out_dir,
                       bool frames,
                       struct QdkSummary **summary);

/**
 * Number of named results.
 *
 * # Safety
 * `summary` must be valid; `count` writable.
 */
enum QdkStatus qdk_summary_len(const struct QdkSummary *summary, size_t *count);

/**
 * Name of the `index`-th result, in ascending order.
 *
 * # Safety
 * `summary` must be valid; `buf` must hold `len` bytes; `needed` may be NULL.
 */
enum QdkStatus qdk_summary_key(const struct QdkSummary *summary,
                               size_t index,
                               char *buf,
                               size_t len,
                               size_t *needed);

/**
 * Value of the result called `key`, e.g. `energy.0` or `population.1`.
 *
 * # Safety
 * `summary` must be valid, `key` NUL-terminated, `value` writable.
 */
enum QdkStatus qdk_summary_get(const struct QdkSummary *summary, const char *key, double *value);

/**
 * # Safety
 * `summary` must be NULL or come from `qdk_run` and not be used again.
 */
void qdk_summary_free(struct QdkSummary *summary);

/**
 * Assembles the Hamiltonian described by a configuration.
 *
 * # Safety
 * `config` must be valid; `system` writable.
 */
enum QdkStatus qdk_system_new(const struct QdkConfig *config, struct QdkSystem **system);

/**
 * Grid points per channel and number of channels.
 *
 * # Safety
 * `system` must be valid; outputs may be NULL.
 */
enum QdkStatus qdk_system_size(const struct QdkSystem *system, size_t *points, size_t *channels);

/**
 * Lowest `count` eigenvalues by dense diagonalization, ascending.
 *
 * # Safety
 * `system` must be valid; `energies` must hold `count` doubles.
 */
enum QdkStatus qdk_bound_energies(const struct QdkSystem *system, size_t count, double *energies);

/**
 * # Safety
 * `system` must be NULL or come from `qdk_system_new` and not be used again.
 * Waves built on it stay valid.
 */
void qdk_system_free(struct QdkSystem *system);

/**
 * Number of Chebychev terms kept for a scaled step `alpha` at `precision`;
 * `imaginary` selects the imaginary-time expansion.
 *
 * # Safety
 * `count` must be writable.
 */
enum QdkStatus qdk_cheby_count(double alpha, double precision, bool imaginary, size_t *count);

/**
 * The configured initial state (`psi.init`) on the system's grid.
 *
 * # Safety
 * `config` and `system` must be valid; `wave` writable.
 */
enum QdkStatus qdk_wave_initial(const struct QdkConfig *config,
                                const struct QdkSystem *system,
                                struct QdkWave **wave);

/**
 * Advances `wave` in place by `dt` under the field-free Hamiltonian with a
 * real-time Chebychev expansion. The absorber is not applied.
 *
 * # Safety
 * `system` and `wave` must be valid and belong to the same grid.
 */
enum QdkStatus qdk_wave_propagate(const struct QdkSystem *system,
                                  struct QdkWave *wave,
                                  double dt,
                                  double precision);

/**
 * Norm, field-free energy and autocorrelation `<reference|wave>`.
 *
 * # Safety
 * All handles must be valid; outputs may be NULL.
 */
enum QdkStatus qdk_wave_expect(const struct QdkSystem *system,
                               const struct QdkWave *wave,
                               const struct QdkWave *reference,
                               double *norm,
                               double *energy,
                               double *acf_re,
                               double *acf_im);

/**
 * Copies channel `channel` (zero-based, grid row-major) into `re`/`im`.
 *
 * # Safety
 * `wave` must be valid; `re` and `im` must each hold `len` doubles.
 */
enum QdkStatus qdk_wave_values(const struct QdkWave *wave,
                               size_t channel,
                               double *re,
                               double *im,
                               size_t len);

/**
 * Independent copy of a wave.
 *
 * # Safety
 * `wave` must be valid; `copy` writable.
 */
enum QdkStatus qdk_wave_clone(const struct QdkWave *wave, struct QdkWave **copy);

/**
 * # Safety
 * `wave` must be NULL or come from this library and not be used again.
 */
void qdk_wave_free(struct QdkWave *wave);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QDYNKIT_H */
