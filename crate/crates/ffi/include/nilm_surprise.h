#ifndef NILM_SURPRISE_H
#define NILM_SURPRISE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Jensen-Shannon divergence, bounded by ln 2.
#define NS_DIVERGENCE_JS 0

// Kullback-Leibler divergence with a small mass floor on the second argument.
#define NS_DIVERGENCE_KL 1

// Kullback-Leibler divergence that fails on zero mass in the second argument.
#define NS_DIVERGENCE_KL_STRICT 2

#define NS_TRACE_RAW_SO 0

#define NS_TRACE_RAW_ST 1

#define NS_TRACE_NORM_SO 2

#define NS_TRACE_NORM_ST 3

#define NS_TRACE_MAX_SO 4

#define NS_TRACE_MAX_ST 5

// Status code returned by every fallible function.
enum NsStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  NS_STATUS_OK = 0,
  // Invalid configuration value or unparsable configuration text.
  NS_STATUS_CONFIG = 1,
  // File, parse or artifact failure.
  NS_STATUS_IO = 2,
  // Non-finite value or failed factorization.
  NS_STATUS_NUMERIC = 3,
  // Too few events for the requested windows.
  NS_STATUS_INSUFFICIENT_DATA = 4,
  // Inconsistent array lengths, dimensions or probability vectors.
  NS_STATUS_INVALID_ARGUMENT = 5,
  NS_STATUS_NULL_POINTER = 6,
  // A Rust panic was caught at the boundary; the handle involved should be freed.
  NS_STATUS_PANIC = 7,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum NsStatus NsStatus;
#else
typedef int32_t NsStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Fitted or freshly initialized mixture model.
typedef struct NsModel NsModel;

// Outcome of a pipeline run.
typedef struct NsResult NsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
//
// The pointer stays valid until the next call into this library on the same thread.
const char *ns_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ns_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed; null is ignored.
void ns_string_free(char *s);

// New model with `k` components at an isotropic normal-inverse-Wishart base measure.
//
// The base has mean `mean[0..dim]`, scale matrix `scale_variance · I`, mean
// precision `kappa` and `nu` degrees of freedom (`nu > dim + 1`).
//
// # Safety
// `mean` must point to `dim` doubles; `out` must be writable.
NsStatus ns_model_new(uintptr_t k,
                      double alpha,
                      const double *mean,
                      uintptr_t dim,
                      double scale_variance,
                      double kappa,
                      double nu,
                      uint64_t seed,
                      struct NsModel **out_model);

// Releases a model; null is ignored.
//
// # Safety
// `model` must come from this library and not have been freed.
void ns_model_free(struct NsModel *model);

// Refits `model` in place on the cumulative event set `features[0..n·dim]`.
//
// The first `ns_model_observed` rows must be the events of earlier fits.
// `out_iterations` and `out_converged` may be null.
//
// # Safety
// Pointers must be valid for the given lengths.
NsStatus ns_model_fit(struct NsModel *model,
                      const double *features,
                      uintptr_t n,
                      uintptr_t dim,
                      double tol,
                      uintptr_t max_iter,
                      uintptr_t *out_iterations,
                      bool *out_converged);

// Truncation level `K`, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t ns_model_truncation(const struct NsModel *model);

// Feature dimension, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t ns_model_dim(const struct NsModel *model);

// Number of events the model has been fitted on, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t ns_model_observed(const struct NsModel *model);

// Writes the `K` expected mixture weights; `len` must equal `K`.
//
// # Safety
// `out_weights` must hold `len` doubles.
NsStatus ns_model_weights(const struct NsModel *model, double *out_weights, uintptr_t len);

// Number of components with expected weight above `min_weight`, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t ns_model_effective_components(const struct NsModel *model, double min_weight);

// Plug-in predictive density at `x[0..dim]`.
//
// # Safety
// `x` must hold `dim` doubles; `out_density` must be writable.
NsStatus ns_model_density(const struct NsModel *model,
                          const double *x,
                          uintptr_t dim,
                          double *out_density);

// Most responsible component of each of the `n` events.
//
// # Safety
// `features` must hold `n·dim` doubles and `out_labels` `n` entries.
NsStatus ns_model_assign(const struct NsModel *model,
                         const double *features,
                         uintptr_t n,
                         uintptr_t dim,
                         uintptr_t *out_labels);

// Serializes the model to JSON; release the string with [`ns_string_free`].
//
// # Safety
// `out_json` must be writable.
NsStatus ns_model_to_json(const struct NsModel *model, char **out_json);

// Restores a model from [`ns_model_to_json`] output.
//
// # Safety
// `json` must be a NUL-terminated string; `out_model` must be writable.
NsStatus ns_model_from_json(const char *json, struct NsModel **out_model);

// Divergence between probability vectors `p` and `q` of length `n`, in nats.
//
// # Safety
// `p` and `q` must hold `n` doubles; `out_value` must be writable.
NsStatus ns_divergence(const double *p,
                       const double *q,
                       uintptr_t n,
                       int32_t kind,
                       double *out_value);

// Transitional surprise of window `[start, start + w)` of the label sequence `z`.
//
// # Safety
// `z` must hold `len` labels; `out_value` must be writable.
NsStatus ns_transitional_surprise(const uintptr_t *z,
                                  uintptr_t len,
                                  uintptr_t start,
                                  uintptr_t w,
                                  uintptr_t k,
                                  double smoothing,
                                  int32_t kind,
                                  double *out_value);

// Scans raw surprise channels for the first run of `patience` quiet windows.
//
// `out_cutoff_window` receives -1 when nothing was found.
//
// # Safety
// `so` and `st` must hold `n` doubles; out-pointers must be writable.
NsStatus ns_scan(const double *so,
                 const double *st,
                 uintptr_t n,
                 uintptr_t patience,
                 double thresh_postdictive,
                 double thresh_transitional,
                 bool *out_found,
                 bool *out_truncated,
                 int64_t *out_cutoff_window);

// Mean absolute error between two equally long series.
//
// # Safety
// `pred` and `truth` must hold `n` doubles; `out_value` must be writable.
NsStatus ns_mean_absolute_error(const double *pred,
                                const double *truth,
                                uintptr_t n,
                                double *out_value);

// Runs the windowed pipeline on an event stream.
//
// `config_toml` holds the cutoff settings (the `[cutoff]` table of a run
// configuration, without the header). `times` may be null, in which case
// event `i` gets time `i`; `end_time` is reported when the cutoff lies past
// the last event.
//
// # Safety
// Pointers must be valid for the given lengths; `out_result` must be writable.
NsStatus ns_run_events(const double *features,
                       const double *times,
                       uintptr_t n,
                       uintptr_t dim,
                       double end_time,
                       const char *config_toml,
                       uint64_t seed,
                       struct NsResult **out_result);

// Block-filters a regularly sampled power series and runs the pipeline on its events.
//
// # Safety
// `values` must hold `n` doubles; `config_toml` must be NUL-terminated; `out_result` writable.
NsStatus ns_run_series(const double *values,
                       uintptr_t n,
                       double start,
                       double sample_period,
                       const char *config_toml,
                       uint64_t seed,
                       struct NsResult **out_result);

// Releases a result; null is ignored.
//
// # Safety
// `result` must come from this library and not have been freed.
void ns_result_free(struct NsResult *result);

// Whether a cutoff window was found (possibly with truncated patience).
//
// # Safety
// `result` must be null or a live handle.
bool ns_result_found(const struct NsResult *result);

// Whether the cutoff is backed by a full patience run.
//
// # Safety
// `result` must be null or a live handle.
bool ns_result_committed(const struct NsResult *result);

// Cutoff window, or -1 when none was found or the handle is null.
//
// # Safety
// `result` must be null or a live handle.
int64_t ns_result_cutoff_window(const struct NsResult *result);

// Cutoff event index, or -1 when none was found or the handle is null.
//
// # Safety
// `result` must be null or a live handle.
int64_t ns_result_cutoff_event(const struct NsResult *result);

// Number of windows in the trace, or 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
uintptr_t ns_result_window_count(const struct NsResult *result);

// Copies one trace column (`NS_TRACE_*`); `len` must equal the window count.
//
// # Safety
// `out_values` must hold `len` doubles.
NsStatus ns_result_trace(const struct NsResult *result,
                         int32_t column,
                         double *out_values,
                         uintptr_t len);

// Serializes the full result as JSON; release the string with [`ns_string_free`].
//
// # Safety
// `out_json` must be writable.
NsStatus ns_result_to_json(const struct NsResult *result, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NILM_SURPRISE_H */
