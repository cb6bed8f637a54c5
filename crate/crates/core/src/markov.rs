//! Transition counts over event state labels and transitional surprise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surprise::Divergence;

/// Raw `K × K` transition counts with additive smoothing applied on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    k: usize,
    smoothing: f64,
    /// Row-major counts.
    counts: Vec<f64>,
    row_totals: Vec<f64>,
}

impl TransitionModel {
    pub fn new(k: usize, smoothing: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("markov.states", "must be at least 1"));
        }
        if !(smoothing > 0.0) || !smoothing.is_finite() {
            return Err(Error::config("markov.smoothing", format!("must be positive, got {smoothing}")));
        }
        Ok(Self {
            k,
            smoothing,
            counts: vec![0.0; k * k],
            row_totals: vec![0.0; k],
        })
    }

    /// Counts every consecutive pair of `z`.
    pub fn from_sequence(z: &[usize], k: usize, smoothing: f64) -> Result<Self> {
        let mut tm = Self::new(k, smoothing)?;
        for pair in z.windows(2) {
            tm.record(pair[0], pair[1])?;
        }
        Ok(tm)
    }

    pub fn states(&self) -> usize {
        self.k
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn count(&self, from: usize, to: usize) -> f64 {
        self.counts[from * self.k + to]
    }

    pub fn total(&self) -> f64 {
        self.row_totals.iter().sum()
    }

    fn check(&self, s: usize) -> Result<()> {
        if s >= self.k {
            return Err(Error::invalid(format!("state {s} out of range for {} states", self.k)));
        }
        Ok(())
    }

    /// Copy of the model with one more `prev → next` transition.
    pub fn record_transition(&self, prev: usize, next: usize) -> Result<Self> {
        let mut out = self.clone();
        out.record(prev, next)?;
        Ok(out)
    }

    pub fn record(&mut self, prev: usize, next: usize) -> Result<()> {
        self.check(prev)?;
        self.check(next)?;
        self.counts[prev * self.k + next] += 1.0;
        self.row_totals[prev] += 1.0;
        Ok(())
    }

    /// Smoothed row `(c_jk + λ) / (Σ_k c_jk + Kλ)`.
    pub fn transition_row(&self, j: usize) -> Result<Vec<f64>> {
        self.check(j)?;
        let mut row = vec![0.0; self.k];
        self.fill_row(j, &mut row);
        Ok(row)
    }

    fn fill_row(&self, j: usize, out: &mut [f64]) {
        let denom = self.row_totals[j] + self.k as f64 * self.smoothing;
        for (o, c) in out.iter_mut().zip(&self.counts[j * self.k..(j + 1) * self.k]) {
            *o = (c + self.smoothing) / denom;
        }
    }
}

/// Sum of row divergences as each of the events `z[N], …, z[N+w−1]` joins the prefix `z[..N]`.
///
/// Adding event `i` adds the transition `z[i−1] → z[i]`, which changes only
/// row `z[i−1]`, so each step costs one row divergence. The first event of a
/// sequence adds no transition. Returns 0 when `w = 0` or `K = 1`.
pub fn transitional_surprise_window(
    z: &[usize],
    n: usize,
    w: usize,
    k: usize,
    smoothing: f64,
    d: Divergence,
) -> Result<f64> {
    if n + w > z.len() {
        return Err(Error::invalid(format!(
            "window [{n}, {}) exceeds the {} labels available",
            n + w,
            z.len()
        )));
    }
    if let Some(&bad) = z.iter().find(|&&s| s >= k) {
        return Err(Error::invalid(format!("label {bad} out of range for {k} states")));
    }
    let mut tm = TransitionModel::from_sequence(&z[..n], k, smoothing)?;
    let mut before = vec![0.0; k];
    let mut after = vec![0.0; k];
    let mut total = 0.0;
    for i in n..n + w {
        if i == 0 {
            continue;
        }
        let (prev, next) = (z[i - 1], z[i]);
        tm.fill_row(prev, &mut before);
        tm.record(prev, next)?;
        tm.fill_row(prev, &mut after);
        total += d.eval(&before, &after)?;
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("transitional surprise is {total}")));
    }
    Ok(total)
}
