//! C ABI over `nilm_surprise`.
//!
//! Every fallible function returns an [`NsStatus`]; on failure a message is
//! available from [`ns_last_error_message`] on the same thread. Results come
//! back through out-pointers, which are left untouched on failure. Handles are
//! opaque and must be released with their `_free` function.
//!
//! Array arguments are `(pointer, length)` pairs; a null pointer is accepted
//! only when the length is zero. Event features are row-major `n × dim`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nilm_surprise::blockfilter::Event;
use nilm_surprise::cutoff::{run_events, run_pipeline, scan, CutoffConfig, CutoffResult, Thresholds};
use nilm_surprise::dpgmm::{init_model, DpgmmModel, FitOptions, NiwParams};
use nilm_surprise::ingest::{mean_absolute_error, PowerSeries};
use nilm_surprise::markov::transitional_surprise_window;
use nilm_surprise::surprise::{Divergence, DivergenceKind, SurpriseTrace};
use nilm_surprise::Error;

/// Status code returned by every fallible function.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    /// Invalid configuration value or unparsable configuration text.
    Config = 1,
    /// File, parse or artifact failure.
    Io = 2,
    /// Non-finite value or failed factorization.
    Numeric = 3,
    /// Too few events for the requested windows.
    InsufficientData = 4,
    /// Inconsistent array lengths, dimensions or probability vectors.
    InvalidArgument = 5,
    NullPointer = 6,
    /// A Rust panic was caught at the boundary; the handle involved should be freed.
    Panic = 7,
}

/// Jensen-Shannon divergence, bounded by ln 2.
pub const NS_DIVERGENCE_JS: i32 = 0;
/// Kullback-Leibler divergence with a small mass floor on the second argument.
pub const NS_DIVERGENCE_KL: i32 = 1;
/// Kullback-Leibler divergence that fails on zero mass in the second argument.
pub const NS_DIVERGENCE_KL_STRICT: i32 = 2;

pub const NS_TRACE_RAW_SO: i32 = 0;
pub const NS_TRACE_RAW_ST: i32 = 1;
pub const NS_TRACE_NORM_SO: i32 = 2;
pub const NS_TRACE_NORM_ST: i32 = 3;
pub const NS_TRACE_MAX_SO: i32 = 4;
pub const NS_TRACE_MAX_ST: i32 = 5;

/// Fitted or freshly initialized mixture model.
pub struct NsModel(DpgmmModel);

/// Outcome of a pipeline run.
pub struct NsResult(CutoffResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(NsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } => NsStatus::Config,
            Error::Io { .. } | Error::Parse { .. } | Error::Artifact { .. } => NsStatus::Io,
            Error::Numeric(_) => NsStatus::Numeric,
            Error::InsufficientData(_) => NsStatus::InsufficientData,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::SupportMismatch
            | Error::AbsoluteContinuity(_) => NsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(NsStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(NsStatus::NullPointer, format!("{what} is null"))
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> NsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            NsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            NsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const NsModel) -> FfiResult<&'a DpgmmModel> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn result_ref<'a>(r: *const NsResult) -> FfiResult<&'a CutoffResult> {
    r.as_ref().map(|r| &r.0).ok_or_else(|| null("result"))
}

unsafe fn events(features: *const f64, times: *const f64, n: usize, dim: usize) -> FfiResult<Vec<Event>> {
    if dim == 0 {
        return Err(invalid("dim must be positive"));
    }
    let total = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
    let x = slice(features, total, "features")?;
    let t = if times.is_null() { None } else { Some(slice(times, n, "times")?) };
    Ok(x.chunks_exact(dim)
        .enumerate()
        .map(|(i, row)| Event::from_feature(t.map_or(i as f64, |t| t[i]), row.to_vec()))
        .collect())
}

fn divergence_from(kind: i32) -> FfiResult<Divergence> {
    match kind {
        NS_DIVERGENCE_JS => Ok(Divergence::js()),
        NS_DIVERGENCE_KL => Ok(Divergence::kl()),
        NS_DIVERGENCE_KL_STRICT => Ok(Divergence {
            kind: DivergenceKind::Kl,
            strict: true,
        }),
        other => Err(invalid(format!("unknown divergence kind {other}"))),
    }
}

fn into_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| invalid("string contains NUL"))
}

/// Message of the last failed call on this thread; empty after a success.
///
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ns_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ns_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- model ----

/// New model with `k` components at an isotropic normal-inverse-Wishart base measure.
///
/// The base has mean `mean[0..dim]`, scale matrix `scale_variance · I`, mean
/// precision `kappa` and `nu` degrees of freedom (`nu > dim + 1`).
///
/// # Safety
/// `mean` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_model_new(
    k: usize,
    alpha: f64,
    mean: *const f64,
    dim: usize,
    scale_variance: f64,
    kappa: f64,
    nu: f64,
    seed: u64,
    out_model: *mut *mut NsModel,
) -> NsStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let mean = slice(mean, dim, "mean")?.to_vec();
        let base = NiwParams::isotropic(mean, scale_variance, kappa, nu)?;
        let model = init_model(k, alpha, base, seed)?;
        *out_model = Box::into_raw(Box::new(NsModel(model)));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ns_model_free(model: *mut NsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Refits `model` in place on the cumulative event set `features[0..n·dim]`.
///
/// The first `ns_model_observed` rows must be the events of earlier fits.
/// `out_iterations` and `out_converged` may be null.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn ns_model_fit(
    model: *mut NsModel,
    features: *const f64,
    n: usize,
    dim: usize,
    tol: f64,
    max_iter: usize,
    out_iterations: *mut usize,
    out_converged: *mut bool,
) -> NsStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let ev = events(features, ptr::null(), n, dim)?;
        let opts = FitOptions {
            tol,
            max_iter,
            ..Default::default()
        };
        let (fitted, report) = m.0.fit_update(&ev, &opts)?;
        m.0 = fitted;
        if let Some(it) = out_iterations.as_mut() {
            *it = report.elbo_history.len();
        }
        if let Some(c) = out_converged.as_mut() {
            *c = report.converged;
        }
        Ok(())
    })
}

/// Truncation level `K`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_model_truncation(model: *const NsModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.truncation())
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_model_dim(model: *const NsModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Number of events the model has been fitted on, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_model_observed(model: *const NsModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_observed())
}

/// Writes the `K` expected mixture weights; `len` must equal `K`.
///
/// # Safety
/// `out_weights` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ns_model_weights(model: *const NsModel, out_weights: *mut f64, len: usize) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        if len != m.truncation() {
            return Err(invalid(format!("buffer holds {len} weights, model has {}", m.truncation())));
        }
        slice_mut(out_weights, len, "out_weights")?.copy_from_slice(&m.expected_weights());
        Ok(())
    })
}

/// Number of components with expected weight above `min_weight`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_model_effective_components(model: *const NsModel, min_weight: f64) -> usize {
    model.as_ref().map_or(0, |m| m.0.effective_components(min_weight))
}

/// Plug-in predictive density at `x[0..dim]`.
///
/// # Safety
/// `x` must hold `dim` doubles; `out_density` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_model_density(
    model: *const NsModel,
    x: *const f64,
    dim: usize,
    out_density: *mut f64,
) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out_density = out(out_density, "out_density")?;
        *out_density = m.predictive_density(slice(x, dim, "x")?)?;
        Ok(())
    })
}

/// Most responsible component of each of the `n` events.
///
/// # Safety
/// `features` must hold `n·dim` doubles and `out_labels` `n` entries.
#[no_mangle]
pub unsafe extern "C" fn ns_model_assign(
    model: *const NsModel,
    features: *const f64,
    n: usize,
    dim: usize,
    out_labels: *mut usize,
) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let ev = events(features, ptr::null(), n, dim)?;
        let labels = m.assign_states(&ev)?;
        slice_mut(out_labels, n, "out_labels")?.copy_from_slice(&labels);
        Ok(())
    })
}

/// Serializes the model to JSON; release the string with [`ns_string_free`].
///
/// # Safety
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_model_to_json(model: *const NsModel, out_json: *mut *mut c_char) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out_json = out(out_json, "out_json")?;
        *out_json = into_c_string(m.to_json(Default::default())?)?;
        Ok(())
    })
}

/// Restores a model from [`ns_model_to_json`] output.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_model_from_json(json: *const c_char, out_model: *mut *mut NsModel) -> NsStatus {
    guard(|| {
        let json = text(json, "json")?;
        let out_model = out(out_model, "out_model")?;
        let (model, _) = DpgmmModel::from_json(json, Path::new("<memory>"))?;
        *out_model = Box::into_raw(Box::new(NsModel(model)));
        Ok(())
    })
}

// ---- divergences ----

/// Divergence between probability vectors `p` and `q` of length `n`, in nats.
///
/// # Safety
/// `p` and `q` must hold `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_divergence(
    p: *const f64,
    q: *const f64,
    n: usize,
    kind: i32,
    out_value: *mut f64,
) -> NsStatus {
    guard(|| {
        let d = divergence_from(kind)?;
        let out_value = out(out_value, "out_value")?;
        *out_value = d.eval(slice(p, n, "p")?, slice(q, n, "q")?)?;
        Ok(())
    })
}

/// Transitional surprise of window `[start, start + w)` of the label sequence `z`.
///
/// # Safety
/// `z` must hold `len` labels; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_transitional_surprise(
    z: *const usize,
    len: usize,
    start: usize,
    w: usize,
    k: usize,
    smoothing: f64,
    kind: i32,
    out_value: *mut f64,
) -> NsStatus {
    guard(|| {
        let d = divergence_from(kind)?;
        let out_value = out(out_value, "out_value")?;
        *out_value = transitional_surprise_window(slice(z, len, "z")?, start, w, k, smoothing, d)?;
        Ok(())
    })
}

/// Scans raw surprise channels for the first run of `patience` quiet windows.
///
/// `out_cutoff_window` receives -1 when nothing was found.
///
/// # Safety
/// `so` and `st` must hold `n` doubles; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_scan(
    so: *const f64,
    st: *const f64,
    n: usize,
    patience: usize,
    thresh_postdictive: f64,
    thresh_transitional: f64,
    out_found: *mut bool,
    out_truncated: *mut bool,
    out_cutoff_window: *mut i64,
) -> NsStatus {
    guard(|| {
        let (found, truncated, window) = (
            out(out_found, "out_found")?,
            out(out_truncated, "out_truncated")?,
            out(out_cutoff_window, "out_cutoff_window")?,
        );
        let idx: Vec<usize> = (1..=n).collect();
        let trace = SurpriseTrace::from_raw(slice(so, n, "so")?, slice(st, n, "st")?, &idx)?;
        let outcome = scan(
            &trace,
            &Thresholds {
                patience,
                postdictive: thresh_postdictive,
                transitional: thresh_transitional,
            },
        )?;
        *found = outcome.found;
        *truncated = outcome.truncated_patience;
        *window = outcome.cutoff_window.map_or(-1, |c| c as i64);
        Ok(())
    })
}

/// Mean absolute error between two equally long series.
///
/// # Safety
/// `pred` and `truth` must hold `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_mean_absolute_error(
    pred: *const f64,
    truth: *const f64,
    n: usize,
    out_value: *mut f64,
) -> NsStatus {
    guard(|| {
        let out_value = out(out_value, "out_value")?;
        *out_value = mean_absolute_error(slice(pred, n, "pred")?, slice(truth, n, "truth")?)?;
        Ok(())
    })
}

// ---- pipeline ----

fn parse_config(toml_text: &str) -> FfiResult<CutoffConfig> {
    let cfg: CutoffConfig =
        toml::from_str(toml_text).map_err(|e| Failure(NsStatus::Config, e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the windowed pipeline on an event stream.
///
/// `config_toml` holds the cutoff settings (the `[cutoff]` table of a run
/// configuration, without the header). `times` may be null, in which case
/// event `i` gets time `i`; `end_time` is reported when the cutoff lies past
/// the last event.
///
/// # Safety
/// Pointers must be valid for the given lengths; `out_result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_run_events(
    features: *const f64,
    times: *const f64,
    n: usize,
    dim: usize,
    end_time: f64,
    config_toml: *const c_char,
    seed: u64,
    out_result: *mut *mut NsResult,
) -> NsStatus {
    guard(|| {
        let cfg = parse_config(text(config_toml, "config_toml")?)?;
        let out_result = out(out_result, "out_result")?;
        let ev = events(features, times, n, dim)?;
        let run = run_events(ev, end_time, &cfg, seed)?;
        *out_result = Box::into_raw(Box::new(NsResult(run.result)));
        Ok(())
    })
}

/// Block-filters a regularly sampled power series and runs the pipeline on its events.
///
/// # Safety
/// `values` must hold `n` doubles; `config_toml` must be NUL-terminated; `out_result` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_run_series(
    values: *const f64,
    n: usize,
    start: f64,
    sample_period: f64,
    config_toml: *const c_char,
    seed: u64,
    out_result: *mut *mut NsResult,
) -> NsStatus {
    guard(|| {
        let cfg = parse_config(text(config_toml, "config_toml")?)?;
        let out_result = out(out_result, "out_result")?;
        let series = PowerSeries::new(start, sample_period, slice(values, n, "values")?.to_vec())?;
        let result = run_pipeline(&series, &cfg, seed)?;
        *out_result = Box::into_raw(Box::new(NsResult(result)));
        Ok(())
    })
}

/// Releases a result; null is ignored.
///
/// # Safety
/// `result` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ns_result_free(result: *mut NsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Whether a cutoff window was found (possibly with truncated patience).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_result_found(result: *const NsResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.found)
}

/// Whether the cutoff is backed by a full patience run.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_result_committed(result: *const NsResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.committed())
}

/// Cutoff window, or -1 when none was found or the handle is null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_result_cutoff_window(result: *const NsResult) -> i64 {
    result
        .as_ref()
        .and_then(|r| r.0.cutoff_window)
        .map_or(-1, |c| c as i64)
}

/// Cutoff event index, or -1 when none was found or the handle is null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_result_cutoff_event(result: *const NsResult) -> i64 {
    result
        .as_ref()
        .and_then(|r| r.0.cutoff_event)
        .map_or(-1, |c| c as i64)
}

/// Number of windows in the trace, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_result_window_count(result: *const NsResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.trace.rows.len())
}

/// Copies one trace column (`NS_TRACE_*`); `len` must equal the window count.
///
/// # Safety
/// `out_values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ns_result_trace(
    result: *const NsResult,
    column: i32,
    out_values: *mut f64,
    len: usize,
) -> NsStatus {
    guard(|| {
        let r = result_ref(result)?;
        let rows = &r.trace.rows;
        if len != rows.len() {
            return Err(invalid(format!("buffer holds {len} values, trace has {}", rows.len())));
        }
        let pick: fn(&nilm_surprise::surprise::TraceRow) -> f64 = match column {
            NS_TRACE_RAW_SO => |r| r.raw_so,
            NS_TRACE_RAW_ST => |r| r.raw_st,
            NS_TRACE_NORM_SO => |r| r.norm_so,
            NS_TRACE_NORM_ST => |r| r.norm_st,
            NS_TRACE_MAX_SO => |r| r.max_so,
            NS_TRACE_MAX_ST => |r| r.max_st,
            other => return Err(invalid(format!("unknown trace column {other}"))),
        };
        for (o, row) in slice_mut(out_values, len, "out_values")?.iter_mut().zip(rows) {
            *o = pick(row);
        }
        Ok(())
    })
}

/// Serializes the full result as JSON; release the string with [`ns_string_free`].
///
/// # Safety
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_result_to_json(result: *const NsResult, out_json: *mut *mut c_char) -> NsStatus {
    guard(|| {
        let r = result_ref(result)?;
        let out_json = out(out_json, "out_json")?;
        *out_json = into_c_string(r.to_json()?)?;
        Ok(())
    })
}
