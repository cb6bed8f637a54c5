//! Windowed surprise pipeline and the joint-threshold cutoff scan.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blockfilter::{block_filter, extract_events, Event, FilterParams};
use crate::dpgmm::{DpgmmModel, FitOptions, NiwParams, DEFAULT_COVARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::ingest::PowerSeries;
use crate::markov::transitional_surprise_window;
use crate::surprise::{postdictive_surprise, Divergence, DivergenceKind, GridPolicy, SurpriseTrace};

pub const RESULT_FORMAT_VERSION: u32 = 1;

/// Mixture hyperparameters as they appear in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpgmmConfig {
    /// Truncation level K.
    pub truncation: usize,
    pub alpha: f64,
    pub kappa: f64,
    /// Wishart degrees of freedom; `d + 2` when unset.
    pub nu: Option<f64>,
    /// Diagonal of the base scale matrix, W².
    pub scale_variance: f64,
    /// Base mean; the mean feature of the first window when unset.
    pub phi: Option<Vec<f64>>,
    pub covariance_floor: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub birth_sigmas: f64,
}

impl Default for DpgmmConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            truncation: 30,
            alpha: 1.0,
            kappa: 0.01,
            nu: None,
            scale_variance: 2500.0,
            phi: None,
            covariance_floor: DEFAULT_COVARIANCE_FLOOR,
            tol: fit.tol,
            max_iter: fit.max_iter,
            birth_sigmas: fit.birth_sigmas,
        }
    }
}

impl DpgmmConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            birth_sigmas: self.birth_sigmas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation < 2 {
            return Err(Error::config("dpgmm.truncation", format!("must be at least 2, got {}", self.truncation)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("dpgmm.alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.scale_variance > 0.0) || !self.scale_variance.is_finite() {
            return Err(Error::config(
                "dpgmm.scale_variance",
                format!("must be positive, got {}", self.scale_variance),
            ));
        }
        self.fit_options().validate()
    }

    /// Base measure for `d`-dimensional features; `first_window` supplies the default mean.
    pub fn base(&self, d: usize, first_window: &[Event]) -> Result<NiwParams> {
        let phi = match &self.phi {
            Some(p) => {
                if p.len() != d {
                    return Err(Error::config(
                        "dpgmm.phi",
                        format!("has {} entries but features have {d}", p.len()),
                    ));
                }
                p.clone()
            }
            None => {
                let n = first_window.len().max(1) as f64;
                (0..d)
                    .map(|j| first_window.iter().map(|e| e.feature[j]).sum::<f64>() / n)
                    .collect()
            }
        };
        NiwParams::isotropic(phi, self.scale_variance, self.kappa, self.nu.unwrap_or(d as f64 + 2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurpriseConfig {
    pub divergence: DivergenceKind,
    /// Turn off KL mass flooring.
    pub strict_kl: bool,
    /// Pseudocount λ added to every transition cell.
    pub smoothing: f64,
    /// Keep each event's first label instead of relabeling history after every refit.
    pub freeze_labels: bool,
    pub grid: GridPolicy,
}

impl Default for SurpriseConfig {
    fn default() -> Self {
        Self {
            divergence: DivergenceKind::Js,
            strict_kl: false,
            smoothing: 1.0,
            freeze_labels: false,
            grid: GridPolicy::default(),
        }
    }
}

impl SurpriseConfig {
    pub fn divergence(&self) -> Divergence {
        Divergence {
            kind: self.divergence,
            strict: self.strict_kl,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing > 0.0) || !self.smoothing.is_finite() {
            return Err(Error::config("surprise.smoothing", format!("must be positive, got {}", self.smoothing)));
        }
        self.grid.validate()
    }
}

fn default_patience() -> usize {
    100
}
fn default_thresh_postdictive() -> f64 {
    0.01
}
fn default_thresh_transitional() -> f64 {
    0.05
}
fn default_feature_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffConfig {
    /// Events per window, w. Required.
    pub window_events: usize,
    /// Quiet windows needed to commit a cutoff, ρ.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_thresh_postdictive")]
    pub thresh_postdictive: f64,
    #[serde(default = "default_thresh_transitional")]
    pub thresh_transitional: f64,
    /// 1: step size only; 2: step size and post-step level.
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default)]
    pub surprise: SurpriseConfig,
    #[serde(default)]
    pub dpgmm: DpgmmConfig,
    #[serde(default)]
    pub filter: FilterParams,
}

impl CutoffConfig {
    pub fn new(window_events: usize) -> Self {
        Self {
            window_events,
            patience: default_patience(),
            thresh_postdictive: default_thresh_postdictive(),
            thresh_transitional: default_thresh_transitional(),
            feature_dim: default_feature_dim(),
            surprise: SurpriseConfig::default(),
            dpgmm: DpgmmConfig::default(),
            filter: FilterParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_events == 0 {
            return Err(Error::config("cutoff.window_events", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("cutoff.patience", "must be at least 1"));
        }
        for (name, v) in [
            ("cutoff.thresh_postdictive", self.thresh_postdictive),
            ("cutoff.thresh_transitional", self.thresh_transitional),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        if !(1..=2).contains(&self.feature_dim) {
            return Err(Error::config("cutoff.feature_dim", format!("must be 1 or 2, got {}", self.feature_dim)));
        }
        self.surprise.validate()?;
        self.dpgmm.validate()?;
        self.filter.validate()
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            patience: self.patience,
            postdictive: self.thresh_postdictive,
            transitional: self.thresh_transitional,
        }
    }
}

/// The three numbers the scan needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub patience: usize,
    pub postdictive: f64,
    pub transitional: f64,
}

impl Thresholds {
    fn quiet(&self, norm_so: f64, norm_st: f64) -> bool {
        norm_so <= self.postdictive && norm_st <= self.transitional
    }
}

/// Where the scan stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub found: bool,
    /// The returned window starts the quiet run that was still open when the trace ended.
    pub truncated_patience: bool,
    pub cutoff_window: Option<usize>,
}

impl ScanOutcome {
    /// A cutoff backed by a complete run of `patience` quiet windows.
    pub fn committed(&self) -> bool {
        self.found && !self.truncated_patience
    }
}

/// Earliest window starting `patience` consecutive windows that are quiet on both channels.
///
/// When no such run exists but the trace ends inside a quiet run, that run's
/// first window is returned with `truncated_patience` set.
pub fn scan(trace: &SurpriseTrace, t: &Thresholds) -> Result<ScanOutcome> {
    if trace.is_empty() {
        return Err(Error::InsufficientData("cannot scan an empty trace".into()));
    }
    if t.patience == 0 {
        return Err(Error::config("cutoff.patience", "must be at least 1"));
    }
    let mut run_start = None;
    for (i, r) in trace.rows.iter().enumerate() {
        if t.quiet(r.norm_so, r.norm_st) {
            let start = *run_start.get_or_insert(i);
            if i + 1 - start >= t.patience {
                return Ok(ScanOutcome {
                    found: true,
                    truncated_patience: false,
                    cutoff_window: Some(start),
                });
            }
        } else {
            run_start = None;
        }
    }
    Ok(ScanOutcome {
        found: run_start.is_some(),
        truncated_patience: run_start.is_some(),
        cutoff_window: run_start,
    })
}

/// A change of the provisional cutoff while windows stream in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    /// Window whose arrival caused the change.
    pub at_window: usize,
    pub previous: Option<ScanOutcome>,
    pub current: ScanOutcome,
    /// The channel maximum grew, rescaling earlier windows.
    pub renormalized: bool,
}

/// Streaming scan: rescans after every window and logs each change of the answer.
#[derive(Debug, Clone)]
pub struct OnlineScanner {
    thresholds: Thresholds,
    trace: SurpriseTrace,
    current: Option<ScanOutcome>,
    revisions: Vec<Revision>,
}

impl OnlineScanner {
    pub fn new(thresholds: Thresholds) -> Self {
        Self {
            thresholds,
            trace: SurpriseTrace::default(),
            current: None,
            revisions: Vec::new(),
        }
    }

    pub fn push(&mut self, raw_so: f64, raw_st: f64, event_index: usize) -> Result<ScanOutcome> {
        let before = self.trace.rows.last().map(|r| (r.max_so, r.max_st));
        self.trace.push(raw_so, raw_st, event_index)?;
        let last = self.trace.rows.last().expect("just pushed");
        let renormalized = before.is_some_and(|(so, st)| last.max_so > so || last.max_st > st);
        let outcome = scan(&self.trace, &self.thresholds)?;
        if self.current != Some(outcome) {
            self.revisions.push(Revision {
                at_window: self.trace.len() - 1,
                previous: self.current,
                current: outcome,
                renormalized,
            });
            self.current = Some(outcome);
        }
        Ok(outcome)
    }

    pub fn current(&self) -> Option<ScanOutcome> {
        self.current
    }

    pub fn trace(&self) -> &SurpriseTrace {
        &self.trace
    }

    pub fn revisions(&self) -> &[Revision] {
        &self.revisions
    }

    pub fn into_parts(self) -> (SurpriseTrace, Vec<Revision>) {
        (self.trace, self.revisions)
    }
}

/// Per-window fit and surprise details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostics {
    pub window: usize,
    pub event_index: usize,
    pub iterations: usize,
    pub converged: bool,
    pub births: usize,
    pub elbo_history: Vec<f64>,
    pub effective_components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub segments: usize,
    pub events: usize,
    pub windows: usize,
    /// Trailing events that did not fill a window.
    pub unused_events: usize,
    pub births: usize,
    /// Components with expected weight above 0.01 after the last window.
    pub effective_components: usize,
    pub zero_postdictive_channel: bool,
    pub zero_transitional_channel: bool,
    /// Windows whose fit stopped at `max_iter`.
    pub unconverged_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub format_version: u32,
    pub found: bool,
    pub truncated_patience: bool,
    pub cutoff_window: Option<usize>,
    /// `(cutoff_window + 1) · w`: events before this index are the training set.
    pub cutoff_event: Option<usize>,
    pub cutoff_timestamp: Option<f64>,
    pub seed: u64,
    pub config: CutoffConfig,
    pub summary: RunSummary,
    /// Name of the trace file written next to this result, if any.
    pub trace_file: Option<String>,
    pub trace: SurpriseTrace,
    pub revisions: Vec<Revision>,
    pub windows: Vec<WindowDiagnostics>,
}

impl CutoffResult {
    pub fn outcome(&self) -> ScanOutcome {
        ScanOutcome {
            found: self.found,
            truncated_patience: self.truncated_patience,
            cutoff_window: self.cutoff_window,
        }
    }

    pub fn committed(&self) -> bool {
        self.outcome().committed()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(format!("serializing result: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let r: CutoffResult = serde_json::from_str(text).map_err(|e| Error::Artifact {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        if r.format_version != RESULT_FORMAT_VERSION {
            return Err(Error::Artifact {
                path: origin.to_path_buf(),
                reason: format!("unsupported format_version {}", r.format_version),
            });
        }
        Ok(r)
    }
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub result: CutoffResult,
    pub model: DpgmmModel,
    pub events: Vec<Event>,
    /// Final state label of every event that entered a window.
    pub labels: Vec<usize>,
}

/// Block-filters every segment and concatenates their events.
pub fn events_from_segments(segments: &[PowerSeries], cfg: &CutoffConfig) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for s in segments {
        let steady = block_filter(s, &cfg.filter)?;
        events.extend(extract_events(&steady, &cfg.filter, cfg.feature_dim)?);
    }
    Ok(events)
}

pub fn run_pipeline(series: &PowerSeries, cfg: &CutoffConfig, seed: u64) -> Result<CutoffResult> {
    Ok(run_segments(std::slice::from_ref(series), cfg, seed)?.result)
}

pub fn run_segments(segments: &[PowerSeries], cfg: &CutoffConfig, seed: u64) -> Result<PipelineRun> {
    cfg.validate()?;
    let events = events_from_segments(segments, cfg)?;
    let end = segments.last().map(|s| s.end_time()).unwrap_or(0.0);
    let mut run = run_events(events, end, cfg, seed)?;
    run.result.summary.segments = segments.len();
    Ok(run)
}

/// The windowed pipeline on an already extracted event stream.
///
/// `end_time` is reported as the cutoff timestamp when the cutoff event lies
/// past the last event.
pub fn run_events(events: Vec<Event>, end_time: f64, cfg: &CutoffConfig, seed: u64) -> Result<PipelineRun> {
    cfg.validate()?;
    let w = cfg.window_events;
    if events.len() < 2 * w {
        return Err(Error::InsufficientData(format!(
            "{} events; at least 2 windows of {w} are needed",
            events.len()
        )));
    }
    let d = events[0].dim();
    if let Some(e) = events.iter().find(|e| e.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: e.dim() });
    }
    let n_windows = events.len() / w;
    let k = cfg.dpgmm.truncation;
    let div = cfg.surprise.divergence();
    let opts = cfg.dpgmm.fit_options();
    let base = cfg.dpgmm.base(d, &events[..w])?;
    let mut model = DpgmmModel::new(k, cfg.dpgmm.alpha, base, seed, cfg.dpgmm.covariance_floor)?;

    let mut scanner = OnlineScanner::new(cfg.thresholds());
    let mut labels: Vec<usize> = Vec::with_capacity(n_windows * w);
    let mut windows = Vec::with_capacity(n_windows);
    let mut births = 0;
    for j in 0..n_windows {
        let (start, stop) = (j * w, (j + 1) * w);
        let seen = &events[..stop];
        let (after, report) = model.fit_update(seen, &opts)?;
        let grid = cfg.surprise.grid.resolve(&[&model, &after])?;
        let so = postdictive_surprise(&model, &after, &grid, div)?;
        if cfg.surprise.freeze_labels {
            labels.extend(after.assign_states(&events[start..stop])?);
        } else {
            labels = after.assign_states(seen)?;
        }
        let st = transitional_surprise_window(&labels, start, w, k, cfg.surprise.smoothing, div)?;
        scanner.push(so, st, stop)?;
        births += report.births;
        windows.push(WindowDiagnostics {
            window: j,
            event_index: stop,
            iterations: report.elbo_history.len(),
            converged: report.converged,
            births: report.births,
            elbo_history: report.elbo_history,
            effective_components: after.effective_components(0.01),
        });
        model = after;
    }

    let (trace, revisions) = scanner.into_parts();
    let outcome = scan(&trace, &cfg.thresholds())?;
    let cutoff_event = outcome.cutoff_window.map(|c| (c + 1) * w);
    let cutoff_timestamp = cutoff_event.map(|e| events.get(e).map_or(end_time, |ev| ev.time));
    let (zero_so, zero_st) = trace.zero_channels();
    let summary = RunSummary {
        segments: 1,
        events: events.len(),
        windows: n_windows,
        unused_events: events.len() - n_windows * w,
        births,
        effective_components: model.effective_components(0.01),
        zero_postdictive_channel: zero_so,
        zero_transitional_channel: zero_st,
        unconverged_windows: windows.iter().filter(|w| !w.converged).count(),
    };
    Ok(PipelineRun {
        result: CutoffResult {
            format_version: RESULT_FORMAT_VERSION,
            found: outcome.found,
            truncated_patience: outcome.truncated_patience,
            cutoff_window: outcome.cutoff_window,
            cutoff_event,
            cutoff_timestamp,
            seed,
            config: cfg.clone(),
            summary,
            trace_file: None,
            trace,
            revisions,
            windows,
        },
        model,
        events,
        labels,
    })
}
