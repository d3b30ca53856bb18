#ifndef TAURUS_FFI_H
#define TAURUS_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TaurusMethod {
  TAURUS_METHOD_TAURUS = 0,
  TAURUS_METHOD_WLS = 1,
} TaurusMethod;

typedef enum TaurusStatus {
  TAURUS_STATUS_OK = 0,
  TAURUS_STATUS_NULL_POINTER = 1,
  TAURUS_STATUS_INVALID_ARGUMENT = 2,
  TAURUS_STATUS_CONFIG = 3,
  TAURUS_STATUS_DOMAIN = 4,
  TAURUS_STATUS_DOMINANCE = 5,
  TAURUS_STATUS_NO_SHIFT_ROOT = 6,
  TAURUS_STATUS_TOO_SHORT = 7,
  TAURUS_STATUS_DEGENERATE = 8,
  TAURUS_STATUS_AMBIGUOUS_TIMING = 9,
  TAURUS_STATUS_PARSE = 10,
  TAURUS_STATUS_IO = 11,
  TAURUS_STATUS_PANIC = 12,
} TaurusStatus;

/**
 * Experiment configuration.
 */
typedef struct TaurusConfig TaurusConfig;

/**
 * Per-period estimates of one signal.
 */
typedef struct TaurusEstimates TaurusEstimates;

/**
 * Scanner parameters.
 */
typedef struct TaurusScanner TaurusScanner;

/**
 * Slew-rate correction applied to the negative half-cycle.
 */
typedef struct TaurusCorrection {
  /**
   * Time shift, s.
   */
  double dt;
  /**
   * Speed ratio.
   */
  double alpha;
  /**
   * Quarter-period reference, s.
   */
  double t0;
  /**
   * Focus-field slew, T/s.
   */
  double slew;
} TaurusCorrection;

typedef struct TaurusPeriodEstimate {
  uintptr_t period;
  /**
   * pFOV center (x, y, z) in m; NaN when the trajectory is unknown.
   */
  double center[3];
  double tau;
  double weight;
  double mirror_mse;
} TaurusPeriodEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *taurus_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated, always
 * nul-terminated when `len > 0`) and returns the full message length excluding the nul.
 * Returns 0 when no error has been recorded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t taurus_last_error(char *buf, uintptr_t len);

/**
 * Default scanner: G = (-4.8, 2.4, 2.4) T/m, Bp = 15 mT, fd = 10 kHz, 100 MS/s simulation
 * and 2 MS/s acquisition.
 */
struct TaurusScanner *taurus_scanner_default(void);

/**
 * Validated scanner from explicit parameters.
 *
 * # Safety
 * `gradients` must point to 3 doubles and `out` to writable storage for a handle.
 */
enum TaurusStatus taurus_scanner_new(const double *gradients,
                                     double drive_amplitude,
                                     double drive_frequency,
                                     double oversample_rate,
                                     double sample_rate,
                                     struct TaurusScanner **out);

/**
 * # Safety
 * `scanner` must be null or a handle from `taurus_scanner_*` not yet freed.
 */
void taurus_scanner_free(struct TaurusScanner *scanner);

/**
 * Built-in experiment defaults.
 */
struct TaurusConfig *taurus_config_default(void);

/**
 * Parses a TOML experiment configuration; parse errors report a byte offset.
 *
 * # Safety
 * `toml` must be a nul-terminated string and `out` writable storage for a handle.
 */
enum TaurusStatus taurus_config_from_toml(const char *toml, struct TaurusConfig **out);

/**
 * # Safety
 * `config` must be null or a handle from `taurus_config_*` not yet freed.
 */
void taurus_config_free(struct TaurusConfig *config);

/**
 * Time shift and speed ratio that undo a focus-field slew of `slew` T/s.
 *
 * # Safety
 * `scanner` must be a live handle and `out` writable.
 */
enum TaurusStatus taurus_sr_correction(const struct TaurusScanner *scanner,
                                       double slew,
                                       struct TaurusCorrection *out);

/**
 * Estimates tau from one pair of half-cycles of `n` samples each at `rate`. A null
 * `correction` means no slew-rate correction.
 *
 * # Safety
 * `neg` and `pos` must point to `n` doubles, `correction` must be null or valid, and
 * `tau_out` writable.
 */
enum TaurusStatus taurus_estimate_pair(const double *neg,
                                       const double *pos,
                                       uintptr_t n,
                                       double rate,
                                       const struct TaurusCorrection *correction,
                                       uintptr_t n_rep,
                                       enum TaurusMethod method,
                                       double *tau_out);

/**
 * Convolves `n` samples with the normalized Debye kernel of time constant `tau`.
 *
 * # Safety
 * `input` and `output` must each point to `n` doubles; they may alias.
 */
enum TaurusStatus taurus_apply_relaxation(const double *input,
                                          uintptr_t n,
                                          double rate,
                                          double tau,
                                          double *output);

/**
 * Inverts `taurus_apply_relaxation`.
 *
 * # Safety
 * `input` and `output` must each point to `n` doubles; they may alias.
 */
enum TaurusStatus taurus_deconvolve(const double *input,
                                    uintptr_t n,
                                    double rate,
                                    double tau,
                                    double *output);

/**
 * Estimates every period of a signal file described by its JSON sidecar. `csv_path` may be
 * null; otherwise the per-period table is written there.
 *
 * # Safety
 * `config` must be a live handle, the paths nul-terminated strings (or null for
 * `csv_path`) and `out` writable storage for a handle.
 */
enum TaurusStatus taurus_estimate_file(const struct TaurusConfig *config,
                                       const char *signal_path,
                                       const char *metadata_path,
                                       const char *csv_path,
                                       struct TaurusEstimates **out);

/**
 * Number of periods in an estimate set; 0 for null.
 *
 * # Safety
 * `estimates` must be null or a live handle.
 */
uintptr_t taurus_estimates_len(const struct TaurusEstimates *estimates);

/**
 * Timing offset removed before estimation, s; NaN for null.
 *
 * # Safety
 * `estimates` must be null or a live handle.
 */
double taurus_estimates_timing_offset(const struct TaurusEstimates *estimates);

/**
 * # Safety
 * `estimates` must be a live handle and `out` writable.
 */
enum TaurusStatus taurus_estimates_get(const struct TaurusEstimates *estimates,
                                       uintptr_t index,
                                       struct TaurusPeriodEstimate *out);

/**
 * # Safety
 * `estimates` must be null or a handle from `taurus_estimate_file` not yet freed.
 */
void taurus_estimates_free(struct TaurusEstimates *estimates);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TAURUS_FFI_H */
