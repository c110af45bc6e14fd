#ifndef DECAYLAB_H
#define DECAYLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_INVALID_PARAMETER = 1,
  DL_STATUS_OUT_OF_RANGE = 2,
  DL_STATUS_DIMENSION_EXCEEDED = 3,
  DL_STATUS_NUMERICAL = 4,
  DL_STATUS_INSUFFICIENT_DATA = 5,
  DL_STATUS_CONFIG = 6,
  DL_STATUS_PARTIAL_ENSEMBLE = 7,
  DL_STATUS_IO = 8,
  DL_STATUS_NULL_POINTER = 9,
  DL_STATUS_BUFFER_TOO_SMALL = 10,
  DL_STATUS_PANIC = 11,
} DlStatus;

typedef enum DlModelKind {
  DL_MODEL_KIND_FRIEDRICHS = 0,
  DL_MODEL_KIND_WIGNER = 1,
} DlModelKind;

typedef enum DlObservable {
  DL_OBSERVABLE_TIME = 0,
  DL_OBSERVABLE_SURVIVAL_PROBABILITY = 1,
  DL_OBSERVABLE_CORE_WIDTH = 2,
  DL_OBSERVABLE_SPREADING = 3,
  DL_OBSERVABLE_PERCENTILE25 = 4,
  DL_OBSERVABLE_PERCENTILE50 = 5,
  DL_OBSERVABLE_PERCENTILE75 = 6,
  DL_OBSERVABLE_SURVIVAL_ERROR = 7,
} DlObservable;

/*
 A model specification.
 */
typedef struct DlModel DlModel;

/*
 Time series of ensemble-averaged observables.
 */
typedef struct DlSeries DlSeries;

typedef struct DlTimeScales {
  double t0;
  double t_inf;
  double t_h;
  double t_c;
} DlTimeScales;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *dl_version(void);

/*
 Copy the calling thread's last error message into `buf` (NUL
 terminated, truncated to `len`). Returns the full message length, or 0
 when there is no error.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t dl_last_error(char *buf, size_t len);

/*
 Create a model on the lattice `[-b, b]`. `rms` selects deterministic
 coupling magnitudes instead of Gaussian ones.

 # Safety
 `out` must be a valid pointer.
 */
enum DlStatus dl_model_new(enum DlModelKind kind,
                           double s,
                           double epsilon,
                           double rho,
                           size_t b,
                           uint64_t seed,
                           bool rms,
                           struct DlModel **out);

/*
 # Safety
 `model` must be null or come from [`dl_model_new`], and not be used after.
 */
void dl_model_free(struct DlModel *model);

/*
 # Safety
 `model` and `out` must be valid pointers.
 */
enum DlStatus dl_model_time_scales(const struct DlModel *model, struct DlTimeScales *out);

/*
 Analytic Friedrichs LDOS of the model's band profile at `omega`.

 # Safety
 `model` and `out` must be valid pointers.
 */
enum DlStatus dl_fm_ldos(const struct DlModel *model, double omega, double *out);

/*
 Propagate `count` realizations (seeds derived from `seed`) and average
 the observables at the `n` sample `times`. `threads = 0` uses all cores.

 # Safety
 `model` and `out` must be valid; `times` must hold `n` values.
 */
enum DlStatus dl_simulate(const struct DlModel *model,
                          const double *times,
                          size_t n,
                          size_t count,
                          uint64_t seed,
                          size_t threads,
                          struct DlSeries **out);

/*
 # Safety
 `series` must be null or come from [`dl_simulate`], and not be used after.
 */
void dl_series_free(struct DlSeries *series);

/*
 Number of samples in `series` (0 for null).

 # Safety
 `series` must be null or valid.
 */
size_t dl_series_len(const struct DlSeries *series);

/*
 Copy one observable column into `buf`, which must hold at least
 `dl_series_len` values.

 # Safety
 `series` must be valid; `buf` must point to `len` writable doubles.
 */
enum DlStatus dl_series_get(const struct DlSeries *series,
                            enum DlObservable which,
                            double *buf,
                            size_t len);

/*
 Run an experiment described by a TOML config. On success `*report_json`
 receives the run report, to be released with [`dl_string_free`].

 # Safety
 `toml` must be a NUL-terminated string; `report_json` must be valid.
 */
enum DlStatus dl_run_config(const char *toml, char **report_json);

/*
 # Safety
 `s` must be null or come from this library, and not be used after.
 */
void dl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DECAYLAB_H */
