//! Divergences between discrete distributions, discretized predictives,
//! postdictive surprise and max-normalized surprise traces.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dpgmm::{DpgmmModel, Predictive};
use crate::error::{Error, Result};

/// Masses are floored at this before taking logs in KL.
pub const MASS_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    #[default]
    Js,
    Kl,
}

/// A divergence kind plus its flooring mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Divergence {
    pub kind: DivergenceKind,
    /// Disable the KL mass floor, so zero-mass violations become errors.
    pub strict: bool,
}

impl Divergence {
    pub fn js() -> Self {
        Self {
            kind: DivergenceKind::Js,
            strict: false,
        }
    }

    pub fn kl() -> Self {
        Self {
            kind: DivergenceKind::Kl,
            strict: false,
        }
    }

    /// Divergence between two probability vectors over the same support.
    pub fn eval(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        match self.kind {
            DivergenceKind::Kl => kl_masses(p, q, !self.strict),
            DivergenceKind::Js => js_masses(p, q),
        }
    }
}

pub fn nats_to_bits(v: f64) -> f64 {
    v / std::f64::consts::LN_2
}

/// `Σ p ln(p / q)` over raw mass vectors.
pub fn kl_masses(p: &[f64], q: &[f64], floor: bool) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch);
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        let qi = if floor {
            qi.max(MASS_FLOOR)
        } else if qi <= 0.0 {
            return Err(Error::AbsoluteContinuity(pi));
        } else {
            qi
        };
        acc += pi * (pi / qi).ln();
    }
    // rounding can leave a tiny negative value when p ≈ q
    Ok(acc.max(0.0))
}

/// Jensen-Shannon divergence, the mean of the two KLs to the midpoint.
pub fn js_masses(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch);
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            acc += pi * (pi / m).ln();
        }
        if qi > 0.0 {
            acc += qi * (qi / m).ln();
        }
    }
    Ok((0.5 * acc).clamp(0.0, std::f64::consts::LN_2))
}

/// Where a [`DiscreteDistribution`] puts its mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// `n` unlabeled categories.
    Categorical(usize),
    /// Cartesian product of per-axis strictly increasing points, first axis slowest.
    Grid(Vec<Vec<f64>>),
}

impl Support {
    pub fn len(&self) -> usize {
        match self {
            Support::Categorical(n) => *n,
            Support::Grid(axes) => axes.iter().map(Vec::len).product(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Support,
    mass: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates that `mass` is a simplex of the support's size.
    pub fn new(support: Support, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != support.len() || mass.is_empty() {
            return Err(Error::invalid(format!(
                "{} masses for a support of {} points",
                mass.len(),
                support.len()
            )));
        }
        if let Support::Grid(axes) = &support {
            for axis in axes {
                if axis.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("grid axis must be strictly increasing"));
                }
            }
        }
        if mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid("masses must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { support, mass })
    }

    pub fn categorical(mass: Vec<f64>) -> Result<Self> {
        Self::new(Support::Categorical(mass.len()), mass)
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Mass-weighted mean point of a grid support.
    pub fn mean(&self) -> Option<Vec<f64>> {
        let Support::Grid(axes) = &self.support else {
            return None;
        };
        let mut m = vec![0.0; axes.len()];
        let mut point = vec![0.0; axes.len()];
        for (idx, &w) in self.mass.iter().enumerate() {
            grid_point(axes, idx, &mut point);
            for j in 0..m.len() {
                m[j] += w * point[j];
            }
        }
        Some(m)
    }

    /// Index of the largest mass.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.mass.iter().enumerate() {
            if v > self.mass[best] {
                best = i;
            }
        }
        best
    }
}

fn check_same_support(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.support != q.support {
        return Err(Error::SupportMismatch);
    }
    Ok(())
}

/// `KL(p || q)` in nats; `floor` replaces zero masses in `q` by [`MASS_FLOOR`].
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution, floor: bool) -> Result<f64> {
    check_same_support(p, q)?;
    kl_masses(&p.mass, &q.mass, floor)
}

pub fn js_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_same_support(p, q)?;
    js_masses(&p.mass, &q.mass)
}

pub fn divergence(p: &DiscreteDistribution, q: &DiscreteDistribution, d: Divergence) -> Result<f64> {
    check_same_support(p, q)?;
    d.eval(&p.mass, &q.mass)
}

/// Evaluation grid: per-axis bounds and points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n_points: usize,
}

pub const MIN_GRID_POINTS: usize = 64;

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n_points: usize) -> Result<Self> {
        let g = Self { lo, hi, n_points };
        g.validate()?;
        Ok(g)
    }

    pub fn one_dim(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], n_points)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::config("surprise.grid", "lo and hi must have equal, non-zero length"));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::config("surprise.grid", format!("degenerate axis [{l}, {h}]")));
            }
        }
        if self.n_points < MIN_GRID_POINTS {
            return Err(Error::config(
                "surprise.grid.n_points",
                format!("must be at least {MIN_GRID_POINTS}, got {}", self.n_points),
            ));
        }
        Ok(())
    }

    /// The smallest grid containing both this one and `bounds`, same resolution.
    pub fn expanded_to(&self, bounds: &[(f64, f64)]) -> GridSpec {
        GridSpec {
            lo: self.lo.iter().zip(bounds).map(|(l, b)| l.min(b.0)).collect(),
            hi: self.hi.iter().zip(bounds).map(|(h, b)| h.max(b.1)).collect(),
            n_points: self.n_points,
        }
    }

    pub fn axes(&self) -> Vec<Vec<f64>> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let step = (h - l) / (self.n_points - 1) as f64;
                (0..self.n_points).map(|i| l + i as f64 * step).collect()
            })
            .collect()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n_points - 1) as f64
    }
}

fn grid_point(axes: &[Vec<f64>], mut idx: usize, out: &mut [f64]) {
    for j in (0..axes.len()).rev() {
        let n = axes[j].len();
        out[j] = axes[j][idx % n];
        idx /= n;
    }
}

/// How postdictive grids are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    /// Points per axis for 1-D features.
    pub n_points: usize,
    /// Points per axis when features have two or more dimensions.
    pub n_points_multi: usize,
    /// Grid covers every component mean ± this many expected standard deviations.
    pub sigmas: f64,
    /// Optional fixed bounds, still expanded when a model reaches past them.
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            n_points: 2048,
            n_points_multi: 128,
            sigmas: 8.0,
            lo: None,
            hi: None,
        }
    }
}

impl GridPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_points", self.n_points), ("n_points_multi", self.n_points_multi)] {
            if n < MIN_GRID_POINTS {
                return Err(Error::config(
                    format!("surprise.grid.{name}"),
                    format!("must be at least {MIN_GRID_POINTS}, got {n}"),
                ));
            }
        }
        if !(self.sigmas > 0.0) || !self.sigmas.is_finite() {
            return Err(Error::config("surprise.grid.sigmas", format!("must be positive, got {}", self.sigmas)));
        }
        match (&self.lo, &self.hi) {
            (None, None) => Ok(()),
            (Some(lo), Some(hi)) => GridSpec::new(lo.clone(), hi.clone(), self.n_points).map(|_| ()),
            _ => Err(Error::config("surprise.grid", "lo and hi must be given together")),
        }
    }

    /// Grid for comparing the predictives of `models`.
    pub fn resolve(&self, models: &[&DpgmmModel]) -> Result<GridSpec> {
        let d = models.first().map(|m| m.dim()).unwrap_or(1);
        let n = if d == 1 { self.n_points } else { self.n_points_multi };
        let preds: Vec<Predictive> = models.iter().map(|m| m.predictive()).collect();
        let bounds = union_bounds(&preds, self.sigmas)?;
        let grid = match (&self.lo, &self.hi) {
            (Some(lo), Some(hi)) => {
                if lo.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: lo.len() });
                }
                GridSpec::new(lo.clone(), hi.clone(), n)?.expanded_to(&bounds)
            }
            _ => GridSpec {
                lo: bounds.iter().map(|b| b.0).collect(),
                hi: bounds.iter().map(|b| b.1).collect(),
                n_points: n,
            },
        };
        grid.validate()?;
        Ok(grid)
    }
}

fn union_bounds(preds: &[Predictive], sigmas: f64) -> Result<Vec<(f64, f64)>> {
    let d = preds.first().map(|p| p.dim()).unwrap_or(1);
    let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for p in preds {
        if p.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
        }
        for (o, b) in out.iter_mut().zip(p.support_bounds(sigmas)) {
            o.0 = o.0.min(b.0);
            o.1 = o.1.max(b.1);
        }
    }
    Ok(out)
}

/// Predictive density on `grid` times cell volume, renormalized to a simplex.
///
/// The grid is first widened, if needed, to cover every component mean
/// ± 8 expected standard deviations.
pub fn discretize_predictive(model: &DpgmmModel, grid: &GridSpec) -> Result<DiscreteDistribution> {
    grid.validate()?;
    if grid.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: grid.dim(),
        });
    }
    let pred = model.predictive();
    let grid = grid.expanded_to(&pred.support_bounds(GridPolicy::default().sigmas));
    discretize_on(&pred, &grid)
}

fn discretize_on(pred: &Predictive, grid: &GridSpec) -> Result<DiscreteDistribution> {
    let axes = grid.axes();
    let d = axes.len();
    let volume: f64 = (0..d).map(|j| grid.cell_width(j)).product();
    let total_points: usize = axes.iter().map(Vec::len).product();
    let mut mass = Vec::with_capacity(total_points);
    let mut point = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for idx in 0..total_points {
        grid_point(&axes, idx, &mut point);
        mass.push(pred.density_with(&point, &mut buf) * volume);
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric(format!("predictive mass on grid is {total}")));
    }
    for m in &mut mass {
        *m /= total;
    }
    Ok(DiscreteDistribution {
        support: Support::Grid(axes),
        mass,
    })
}

/// Divergence between the predictives before and after a window, both
/// discretized on `grid` widened to cover the two models.
pub fn postdictive_surprise(
    before: &DpgmmModel,
    after: &DpgmmModel,
    grid: &GridSpec,
    d: Divergence,
) -> Result<f64> {
    if before.dim() != after.dim() {
        return Err(Error::DimensionMismatch {
            expected: before.dim(),
            got: after.dim(),
        });
    }
    if grid.dim() != before.dim() {
        return Err(Error::DimensionMismatch {
            expected: before.dim(),
            got: grid.dim(),
        });
    }
    grid.validate()?;
    let (pb, pa) = (before.predictive(), after.predictive());
    let bounds = union_bounds(&[pb.clone(), pa.clone()], GridPolicy::default().sigmas)?;
    let grid = grid.expanded_to(&bounds);
    let p = discretize_on(&pb, &grid)?;
    let q = discretize_on(&pa, &grid)?;
    let v = divergence(&p, &q, d)?;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("postdictive surprise is {v}")));
    }
    Ok(v)
}

/// One window of a [`SurpriseTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub window_index: usize,
    /// Number of events absorbed once this window is fitted.
    pub event_index: usize,
    pub raw_so: f64,
    pub raw_st: f64,
    pub norm_so: f64,
    pub norm_st: f64,
    /// Running maxima up to and including this window.
    pub max_so: f64,
    pub max_st: f64,
}

/// Per-window surprise, each channel normalized by its maximum so far.
///
/// Appending a new maximum rescales every earlier normalized value, so the
/// trace always equals normalization by the global maximum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurpriseTrace {
    pub rows: Vec<TraceRow>,
}

impl SurpriseTrace {
    /// Builds and normalizes a trace from raw channels.
    pub fn from_raw(raw_so: &[f64], raw_st: &[f64], event_index: &[usize]) -> Result<Self> {
        if raw_so.len() != raw_st.len() || raw_so.len() != event_index.len() {
            return Err(Error::invalid("trace channels differ in length"));
        }
        let mut t = SurpriseTrace::default();
        for i in 0..raw_so.len() {
            t.push(raw_so[i], raw_st[i], event_index[i])?;
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Append one window and renormalize.
    pub fn push(&mut self, raw_so: f64, raw_st: f64, event_index: usize) -> Result<()> {
        for (name, v) in [("postdictive", raw_so), ("transitional", raw_st)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Numeric(format!("{name} surprise {v} is not a finite non-negative value")));
            }
        }
        let (prev_so, prev_st) = self
            .rows
            .last()
            .map(|r| (r.max_so, r.max_st))
            .unwrap_or((0.0, 0.0));
        self.rows.push(TraceRow {
            window_index: self.rows.len(),
            event_index,
            raw_so,
            raw_st,
            norm_so: 0.0,
            norm_st: 0.0,
            max_so: prev_so.max(raw_so),
            max_st: prev_st.max(raw_st),
        });
        let last = self.rows.last().expect("just pushed");
        let (grew_so, grew_st) = (last.max_so > prev_so, last.max_st > prev_st);
        if grew_so || grew_st || self.rows.len() == 1 {
            self.renormalize();
        } else {
            let (mso, mst) = (last.max_so, last.max_st);
            let row = self.rows.last_mut().expect("just pushed");
            row.norm_so = ratio(raw_so, mso);
            row.norm_st = ratio(raw_st, mst);
        }
        Ok(())
    }

    fn renormalize(&mut self) {
        let Some(last) = self.rows.last() else {
            return;
        };
        let (mso, mst) = (last.max_so, last.max_st);
        for r in &mut self.rows {
            r.norm_so = ratio(r.raw_so, mso);
            r.norm_st = ratio(r.raw_st, mst);
        }
    }

    /// Channels whose raw values are all zero (normalized to all-zero).
    pub fn zero_channels(&self) -> (bool, bool) {
        (
            self.rows.iter().all(|r| r.raw_so == 0.0),
            self.rows.iter().all(|r| r.raw_st == 0.0),
        )
    }

    pub fn raw_so(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.raw_so).collect()
    }

    pub fn raw_st(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.raw_st).collect()
    }

    pub fn norm_so(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.norm_so).collect()
    }

    pub fn norm_st(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.norm_st).collect()
    }
}

fn ratio(v: f64, max: f64) -> f64 {
    if max > 0.0 {
        v / max
    } else {
        0.0
    }
}

/// Recompute every normalized value and running maximum from the raw channels.
pub fn normalize_trace(trace: &SurpriseTrace) -> SurpriseTrace {
    let mut out = trace.clone();
    let (mut mso, mut mst) = (0.0f64, 0.0f64);
    for r in &mut out.rows {
        mso = mso.max(r.raw_so);
        mst = mst.max(r.raw_st);
        r.max_so = mso;
        r.max_st = mst;
    }
    for r in &mut out.rows {
        r.norm_so = ratio(r.raw_so, mso);
        r.norm_st = ratio(r.raw_st, mst);
    }
    out
}

pub const TRACE_COLUMNS: [&str; 8] = [
    "window_index",
    "event_index",
    "raw_S_o",
    "raw_S_t",
    "norm_S_o",
    "norm_S_t",
    "max_S_o",
    "max_S_t",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            other => Err(Error::config("format", format!("unknown trace format {other:?} (csv or json)"))),
        }
    }
}

impl TraceFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Json => "json",
        }
    }
}

/// Trace export with optional `# key: value` header lines (CSV) or a `header` object (JSON).
pub fn render_trace(trace: &SurpriseTrace, format: TraceFormat, header: &[(String, String)]) -> Result<Vec<u8>> {
    match format {
        TraceFormat::Csv => {
            let mut out = Vec::new();
            for (k, v) in header {
                for line in v.lines() {
                    writeln!(out, "# {k}: {line}").expect("writing to a Vec");
                }
            }
            let mut w = csv::Writer::from_writer(out);
            let io = |e: csv::Error| Error::invalid(format!("writing trace: {e}"));
            w.write_record(TRACE_COLUMNS).map_err(io)?;
            for r in &trace.rows {
                w.write_record([
                    r.window_index.to_string(),
                    r.event_index.to_string(),
                    r.raw_so.to_string(),
                    r.raw_st.to_string(),
                    r.norm_so.to_string(),
                    r.norm_st.to_string(),
                    r.max_so.to_string(),
                    r.max_st.to_string(),
                ])
                .map_err(io)?;
            }
            w.into_inner().map_err(|e| Error::invalid(format!("writing trace: {e}")))
        }
        TraceFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                header: serde_json::Map<String, serde_json::Value>,
                columns: [&'static str; 8],
                rows: &'a [TraceRow],
            }
            let header = header
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect();
            let doc = Doc {
                header,
                columns: TRACE_COLUMNS,
                rows: &trace.rows,
            };
            let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Parse a trace written by [`render_trace`].
pub fn parse_trace(text: &str, format: TraceFormat, origin: &Path) -> Result<SurpriseTrace> {
    let bad = |reason: String| Error::Artifact {
        path: origin.to_path_buf(),
        reason,
    };
    match format {
        TraceFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .comment(Some(b'#'))
                .from_reader(text.as_bytes());
            let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
            if headers.iter().ne(TRACE_COLUMNS.iter().copied()) {
                return Err(bad(format!("unexpected columns {headers:?}")));
            }
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| bad(e.to_string()))?;
                let f = |i: usize| -> Result<f64> {
                    rec[i].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", TRACE_COLUMNS[i])))
                };
                let u = |i: usize| -> Result<usize> {
                    rec[i].parse::<usize>().map_err(|e| bad(format!("column {}: {e}", TRACE_COLUMNS[i])))
                };
                rows.push(TraceRow {
                    window_index: u(0)?,
                    event_index: u(1)?,
                    raw_so: f(2)?,
                    raw_st: f(3)?,
                    norm_so: f(4)?,
                    norm_st: f(5)?,
                    max_so: f(6)?,
                    max_st: f(7)?,
                });
            }
            Ok(SurpriseTrace { rows })
        }
        TraceFormat::Json => {
            #[derive(Deserialize)]
            struct Doc {
                rows: Vec<TraceRow>,
            }
            let doc: Doc = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
            Ok(SurpriseTrace { rows: doc.rows })
        }
    }
}
