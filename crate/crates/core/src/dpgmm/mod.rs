//! Truncated variational Dirichlet-process Gaussian mixture.
//!
//! The variational family factorizes into Beta sticks `q(v_k)` for the first
//! `K − 1` stick fractions, a normal-inverse-Wishart `q(μ_k, Σ_k)` per
//! component and a categorical `q(z_n)` per event. [`DpgmmModel::fit_update`]
//! runs coordinate ascent on the evidence lower bound over the cumulative
//! event set, warm-started from the current variational parameters.
//!
//! Coordinate ascent cannot create components on its own once every event is
//! explained, so the initial responsibilities of a fit place events that no
//! occupied component explains (beyond `birth_sigmas` expected standard
//! deviations, under the component's covariance or the prior's) into free
//! components. The ELBO sequence is recorded from the
//! first M-step onward and never decreases.

pub mod checkpoint;
mod niw;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

pub use niw::{NiwParams, SuffStats};
use niw::{chol_quad, kl_niw, NiwCache};

use crate::blockfilter::Event;
use crate::error::{Error, Result};

/// Components with at least this much responsibility mass count as occupied.
const OCCUPIED_MASS: f64 = 0.5;

/// Variational Beta factor over one stick fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StickBeta {
    pub a: f64,
    pub b: f64,
}

impl StickBeta {
    pub fn prior(alpha: f64) -> Self {
        Self { a: 1.0, b: alpha }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    fn e_log_v(&self) -> f64 {
        digamma(self.a) - digamma(self.a + self.b)
    }

    fn e_log_one_minus_v(&self) -> f64 {
        digamma(self.b) - digamma(self.a + self.b)
    }

    /// `KL(Beta(a, b) || Beta(a0, b0))`.
    fn kl(&self, prior: &StickBeta) -> f64 {
        let (a, b, a0, b0) = (self.a, self.b, prior.a, prior.b);
        ln_beta(a0, b0) - ln_beta(a, b)
            + (a - a0) * digamma(a)
            + (b - b0) * digamma(b)
            + (a0 - a + b0 - b) * digamma(a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Stop once one iteration improves the ELBO by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Mahalanobis radius (in expected standard deviations) beyond which a new
    /// event seeds a free component.
    pub birth_sigmas: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 500,
            birth_sigmas: 5.0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::config("dpgmm.tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("dpgmm.max_iter", "must be at least 1"));
        }
        if !(self.birth_sigmas > 0.0) || !self.birth_sigmas.is_finite() {
            return Err(Error::config(
                "dpgmm.birth_sigmas",
                format!("must be positive, got {}", self.birth_sigmas),
            ));
        }
        Ok(())
    }
}

/// What one call to [`DpgmmModel::fit_update`] did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// ELBO after every M-step.
    pub elbo_history: Vec<f64>,
    pub converged: bool,
    /// Free components seeded by unexplained events.
    pub births: usize,
}

impl FitReport {
    pub fn final_elbo(&self) -> f64 {
        *self.elbo_history.last().expect("fit records at least one ELBO")
    }

    /// Most negative change between consecutive iterations (0 when none decreased).
    pub fn worst_step(&self) -> f64 {
        self.elbo_history
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::min)
    }
}

/// Row-stochastic `N × K` matrix of `q(z_n = k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn rows(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.data.len() / self.k
        }
    }

    pub fn cols(&self) -> usize {
        self.k
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.k..(n + 1) * self.k]
    }

    /// Index of the largest entry per row, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|n| {
                let row = self.row(n);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Truncated variational DP-GMM state.
#[derive(Debug, Clone, PartialEq)]
pub struct DpgmmModel {
    alpha: f64,
    /// Base measure with the covariance floor already added to its scale.
    base: NiwParams,
    covariance_floor: f64,
    sticks: Vec<StickBeta>,
    components: Vec<NiwParams>,
    stats: Vec<SuffStats>,
    n_observed: usize,
    seed: u64,
}

/// Default covariance floor in W², added to the base scale matrix.
pub const DEFAULT_COVARIANCE_FLOOR: f64 = 1e-6;

/// A model with prior sticks `Beta(1, alpha)` and every component at the base measure.
pub fn init_model(k: usize, alpha: f64, base: NiwParams, seed: u64) -> Result<DpgmmModel> {
    DpgmmModel::new(k, alpha, base, seed, DEFAULT_COVARIANCE_FLOOR)
}

struct FitState {
    sticks: Vec<StickBeta>,
    components: Vec<NiwParams>,
    stats: Vec<SuffStats>,
}

impl DpgmmModel {
    pub fn new(
        k: usize,
        alpha: f64,
        base: NiwParams,
        seed: u64,
        covariance_floor: f64,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::config("dpgmm.truncation", format!("must be at least 2, got {k}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::config("dpgmm.alpha", format!("must be positive, got {alpha}")));
        }
        if !(covariance_floor >= 0.0) || !covariance_floor.is_finite() {
            return Err(Error::config(
                "dpgmm.covariance_floor",
                format!("must be non-negative, got {covariance_floor}"),
            ));
        }
        base.validate()?;
        let d = base.dim();
        let mut base = base;
        base.scale += DMatrix::identity(d, d) * covariance_floor;
        Ok(Self {
            alpha,
            sticks: vec![StickBeta::prior(alpha); k - 1],
            components: vec![base.clone(); k],
            stats: vec![SuffStats::empty(d); k],
            base,
            covariance_floor,
            n_observed: 0,
            seed,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn truncation(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &NiwParams {
        &self.base
    }

    pub fn covariance_floor(&self) -> f64 {
        self.covariance_floor
    }

    pub fn sticks(&self) -> &[StickBeta] {
        &self.sticks
    }

    pub fn components(&self) -> &[NiwParams] {
        &self.components
    }

    pub fn suff_stats(&self) -> &[SuffStats] {
        &self.stats
    }

    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `E_q[π_k] = E[v_k] Π_{ℓ<k} (1 − E[v_ℓ])`, the last component taking the remainder.
    pub fn expected_weights(&self) -> Vec<f64> {
        let mut remaining = 1.0;
        let mut w = Vec::with_capacity(self.truncation());
        for s in &self.sticks {
            let m = s.mean();
            w.push(m * remaining);
            remaining *= 1.0 - m;
        }
        w.push(remaining);
        w
    }

    /// Components whose expected weight exceeds `min_weight`.
    pub fn effective_components(&self, min_weight: f64) -> usize {
        self.expected_weights()
            .iter()
            .filter(|&&w| w > min_weight)
            .count()
    }

    /// Plug-in posterior predictive: `Σ_k E[π_k] N(x; E[μ_k], E[Σ_k])`.
    pub fn predictive(&self) -> Predictive {
        Predictive::new(self)
    }

    pub fn predictive_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("predictive density at a non-finite point"));
        }
        Ok(self.predictive().density(x))
    }

    pub fn responsibilities(&self, events: &[Event]) -> Result<Responsibilities> {
        let x = self.flatten(events)?;
        let caches = self.caches();
        let ell = expected_log_lik(&x, self.dim(), &caches);
        let (r, _) = e_step(&ell, &e_log_pi(&self.sticks));
        Ok(Responsibilities {
            k: self.truncation(),
            data: r,
        })
    }

    /// Most responsible component per event.
    pub fn assign_states(&self, events: &[Event]) -> Result<Vec<usize>> {
        Ok(self.responsibilities(events)?.argmax())
    }

    /// Evidence lower bound of `events` with `q(z)` set optimally for the current factors.
    pub fn elbo(&self, events: &[Event]) -> Result<f64> {
        if events.is_empty() {
            return Err(Error::invalid("ELBO of an empty event set"));
        }
        let x = self.flatten(events)?;
        let caches = self.caches();
        let ell = expected_log_lik(&x, self.dim(), &caches);
        let elnpi = e_log_pi(&self.sticks);
        let (r, _) = e_step(&ell, &elnpi);
        let state = FitState {
            sticks: self.sticks.clone(),
            components: self.components.clone(),
            stats: self.stats.clone(),
        };
        let value = self.bound(&r, &ell, &state, &caches);
        check_finite(value, "ELBO")
    }

    /// Coordinate ascent over the cumulative event set.
    ///
    /// `events[..n_observed]` are taken to be the events this model already
    /// absorbed; only later events may seed new components.
    pub fn fit_update(&self, events: &[Event], opts: &FitOptions) -> Result<(DpgmmModel, FitReport)> {
        opts.validate()?;
        if events.is_empty() {
            return Err(Error::invalid("fit_update needs at least one event"));
        }
        let d = self.dim();
        let x = self.flatten(events)?;
        let (mut r, births) = self.initial_responsibilities(&x, opts);

        let mut state = self.m_step(&x, &r);
        let mut caches = state_caches(&state);
        let mut ell = expected_log_lik(&x, d, &caches);
        let mut history = vec![check_finite(self.bound(&r, &ell, &state, &caches), "ELBO")?];
        let mut converged = false;
        for _ in 1..opts.max_iter {
            r = e_step(&ell, &e_log_pi(&state.sticks)).0;
            state = self.m_step(&x, &r);
            caches = state_caches(&state);
            ell = expected_log_lik(&x, d, &caches);
            let value = check_finite(self.bound(&r, &ell, &state, &caches), "ELBO")?;
            let prev = *history.last().expect("non-empty");
            history.push(value);
            if value - prev < opts.tol {
                converged = true;
                break;
            }
        }

        let model = DpgmmModel {
            alpha: self.alpha,
            base: self.base.clone(),
            covariance_floor: self.covariance_floor,
            sticks: state.sticks,
            components: state.components,
            stats: state.stats,
            n_observed: events.len(),
            seed: self.seed,
        };
        Ok((
            model,
            FitReport {
                elbo_history: history,
                converged,
                births,
            },
        ))
    }

    fn flatten(&self, events: &[Event]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut x = Vec::with_capacity(events.len() * d);
        for e in events {
            if e.feature.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: e.feature.len(),
                });
            }
            if e.feature.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite feature at t = {}", e.time)));
            }
            x.extend_from_slice(&e.feature);
        }
        Ok(x)
    }

    fn caches(&self) -> Vec<NiwCache> {
        self.components.iter().map(NiwParams::cache).collect()
    }

    fn m_step(&self, x: &[f64], r: &[f64]) -> FitState {
        let d = self.dim();
        let k = self.truncation();
        let n = x.len() / d;
        let mut stats = Vec::with_capacity(k);
        for c in 0..k {
            let mut count = 0.0;
            let mut sum = vec![0.0; d];
            for i in 0..n {
                let w = r[i * k + c];
                count += w;
                for j in 0..d {
                    sum[j] += w * x[i * d + j];
                }
            }
            let mut s = SuffStats::empty(d);
            s.count = count;
            if count > f64::MIN_POSITIVE {
                let mean: Vec<f64> = sum.iter().map(|v| v / count).collect();
                let mut scatter = DMatrix::zeros(d, d);
                for i in 0..n {
                    let w = r[i * k + c];
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..d {
                        let da = x[i * d + a] - mean[a];
                        for b in 0..=a {
                            scatter[(a, b)] += w * da * (x[i * d + b] - mean[b]);
                        }
                    }
                }
                for a in 0..d {
                    for b in 0..a {
                        scatter[(b, a)] = scatter[(a, b)];
                    }
                }
                s.mean = DVector::from_vec(mean);
                s.scatter = scatter;
            }
            stats.push(s);
        }

        let mut tail: f64 = stats.iter().map(|s| s.count).sum();
        let mut sticks = Vec::with_capacity(k - 1);
        for s in stats.iter().take(k - 1) {
            tail -= s.count;
            sticks.push(StickBeta {
                a: 1.0 + s.count,
                b: self.alpha + tail.max(0.0),
            });
        }
        let components = stats.iter().map(|s| self.base.posterior(s)).collect();
        FitState {
            sticks,
            components,
            stats,
        }
    }

    /// ELBO for responsibilities `r` and factors `state`; `ell` and `caches` must belong to `state`.
    fn bound(&self, r: &[f64], ell: &[f64], state: &FitState, caches: &[NiwCache]) -> f64 {
        let k = self.truncation();
        let elnpi = e_log_pi(&state.sticks);
        let mut data_term = 0.0;
        for (row_r, row_l) in r.chunks_exact(k).zip(ell.chunks_exact(k)) {
            for c in 0..k {
                let w = row_r[c];
                if w > 0.0 {
                    data_term += w * (row_l[c] + elnpi[c] - w.ln());
                }
            }
        }
        let stick_prior = StickBeta::prior(self.alpha);
        let kl_sticks: f64 = state.sticks.iter().map(|s| s.kl(&stick_prior)).sum();
        let prior = self.base.cache();
        let kl_components: f64 = caches.iter().map(|c| kl_niw(c, &prior)).sum();
        data_term - kl_sticks - kl_components
    }

    fn initial_responsibilities(&self, x: &[f64], opts: &FitOptions) -> (Vec<f64>, usize) {
        let d = self.dim();
        let k = self.truncation();
        let n = x.len() / d;
        let caches = self.caches();
        let ell = expected_log_lik(x, d, &caches);
        let (mut r, _) = e_step(&ell, &e_log_pi(&self.sticks));

        let occupied: Vec<usize> = (0..k).filter(|&c| self.stats[c].count >= OCCUPIED_MASS).collect();
        let free: Vec<usize> = (0..k).filter(|&c| self.stats[c].count < OCCUPIED_MASS).collect();
        let radius2 = opts.birth_sigmas * opts.birth_sigmas;
        let mut buf = vec![0.0; d];

        // squared distance in units of the expected covariance
        let expected_dist2 = |cache: &NiwCache, xi: &[f64], buf: &mut [f64]| {
            for j in 0..d {
                buf[j] = xi[j] - cache.mean[j];
            }
            (cache.nu - d as f64 - 1.0) * chol_quad(&cache.chol, d, buf)
        };

        // a component explains an event only if it lies within the radius under both its
        // own expected covariance and the prior one, so one broad component cannot
        // swallow every later level
        let prior = self.base.cache();
        let at_prior: Vec<NiwCache> = occupied
            .iter()
            .map(|&c| NiwCache {
                mean: caches[c].mean.clone(),
                ..prior.clone()
            })
            .collect();
        let first_new = self.n_observed.min(n);
        let mut unexplained: Vec<usize> = (first_new..n)
            .filter(|&i| {
                let xi = &x[i * d..(i + 1) * d];
                occupied.iter().zip(&at_prior).all(|(&c, p)| {
                    expected_dist2(&caches[c], xi, &mut buf) > radius2 || expected_dist2(p, xi, &mut buf) > radius2
                })
            })
            .collect();
        if unexplained.is_empty() || free.is_empty() {
            return (r, 0);
        }
        let fresh = occupied.is_empty();
        if fresh {
            unexplained.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        }

        struct Birth {
            sum: Vec<f64>,
            members: Vec<usize>,
        }
        let mut births: Vec<Birth> = Vec::new();
        for &i in &unexplained {
            let xi = &x[i * d..(i + 1) * d];
            let mut best: Option<(usize, f64)> = None;
            for (b, birth) in births.iter().enumerate() {
                let center = NiwCache {
                    mean: birth.sum.iter().map(|s| s / birth.members.len() as f64).collect(),
                    ..prior.clone()
                };
                let dist = expected_dist2(&center, xi, &mut buf);
                if dist <= radius2 && best.is_none_or(|(_, bd)| dist < bd) {
                    best = Some((b, dist));
                }
            }
            match best {
                Some((b, _)) => {
                    for j in 0..d {
                        births[b].sum[j] += xi[j];
                    }
                    births[b].members.push(i);
                }
                None => births.push(Birth {
                    sum: xi.to_vec(),
                    members: vec![i],
                }),
            }
        }
        if fresh {
            births.sort_by(|a, b| {
                b.members.len().cmp(&a.members.len()).then_with(|| {
                    let ca = a.sum[0] / a.members.len() as f64;
                    let cb = b.sum[0] / b.members.len() as f64;
                    ca.total_cmp(&cb)
                })
            });
        }

        let kept = births.len().min(free.len());
        let centers: Vec<Vec<f64>> = births[..kept]
            .iter()
            .map(|b| b.sum.iter().map(|s| s / b.members.len() as f64).collect())
            .collect();
        let assign = |i: usize, slot: usize, r: &mut [f64]| {
            let row = &mut r[i * k..(i + 1) * k];
            row.fill(0.0);
            row[slot] = 1.0;
        };
        for (b, birth) in births.iter().enumerate() {
            // overflow births go to the nearest kept center
            let slot_index = if b < kept {
                b
            } else {
                let xc: Vec<f64> = birth.sum.iter().map(|s| s / birth.members.len() as f64).collect();
                (0..kept)
                    .min_by(|&p, &q| {
                        let dp: f64 = (0..d).map(|j| (xc[j] - centers[p][j]).powi(2)).sum();
                        let dq: f64 = (0..d).map(|j| (xc[j] - centers[q][j]).powi(2)).sum();
                        dp.total_cmp(&dq)
                    })
                    .expect("at least one free slot")
            };
            for &i in &birth.members {
                assign(i, free[slot_index], &mut r);
            }
        }
        (r, kept)
    }
}

fn state_caches(state: &FitState) -> Vec<NiwCache> {
    state.components.iter().map(NiwParams::cache).collect()
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} is not finite ({v})")))
    }
}

/// `E_q[ln π_k]` under the stick-breaking factors.
fn e_log_pi(sticks: &[StickBeta]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sticks.len() + 1);
    let mut acc = 0.0;
    for s in sticks {
        out.push(s.e_log_v() + acc);
        acc += s.e_log_one_minus_v();
    }
    out.push(acc);
    out
}

fn expected_log_lik(x: &[f64], d: usize, caches: &[NiwCache]) -> Vec<f64> {
    let k = caches.len();
    let n = x.len() / d;
    let mut out = vec![0.0; n * k];
    let mut buf = vec![0.0; d];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for (c, cache) in caches.iter().enumerate() {
            out[i * k + c] = cache.expected_log_likelihood(xi, &mut buf);
        }
    }
    out
}

/// Normalized responsibilities and the per-row log normalizers.
fn e_step(ell: &[f64], elnpi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = elnpi.len();
    let mut r = vec![0.0; ell.len()];
    let mut lse = Vec::with_capacity(ell.len() / k);
    for (row_l, row_r) in ell.chunks_exact(k).zip(r.chunks_exact_mut(k)) {
        let mut max = f64::NEG_INFINITY;
        for c in 0..k {
            row_r[c] = row_l[c] + elnpi[c];
            max = max.max(row_r[c]);
        }
        let mut total = 0.0;
        for v in row_r.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row_r.iter_mut() {
            *v /= total;
        }
        lse.push(max + total.ln());
    }
    (r, lse)
}

/// The plug-in Gaussian mixture used as the posterior predictive.
#[derive(Debug, Clone)]
pub struct Predictive {
    d: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major lower Cholesky factors of `E[Σ_k]`.
    chols: Vec<Vec<f64>>,
    std_devs: Vec<Vec<f64>>,
    log_norms: Vec<f64>,
}

impl Predictive {
    fn new(model: &DpgmmModel) -> Self {
        let d = model.dim();
        let weights = model.expected_weights();
        let mut means = Vec::new();
        let mut chols = Vec::new();
        let mut std_devs = Vec::new();
        let mut log_norms = Vec::new();
        for (c, w) in model.components.iter().zip(&weights) {
            let cov = c.expected_covariance();
            let l = cov.clone().cholesky().expect("expected covariance is positive-definite").l();
            let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let mut flat = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..=i {
                    flat[i * d + j] = l[(i, j)];
                }
            }
            means.push(c.mean.iter().copied().collect());
            chols.push(flat);
            std_devs.push((0..d).map(|i| cov[(i, i)].sqrt()).collect());
            log_norms.push(
                w.ln() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det,
            );
        }
        Self {
            d,
            weights,
            means,
            chols,
            std_devs,
            log_norms,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Per-axis standard deviations of each component.
    pub fn std_devs(&self) -> &[Vec<f64>] {
        &self.std_devs
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.d];
        self.density_with(x, &mut buf)
    }

    pub(crate) fn density_with(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for c in 0..self.weights.len() {
            for j in 0..self.d {
                buf[j] = x[j] - self.means[c][j];
            }
            let q = chol_quad(&self.chols[c], self.d, buf);
            total += (self.log_norms[c] - 0.5 * q).exp();
        }
        total
    }

    /// Mixture mean `Σ_k w_k m_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for j in 0..self.d {
                m[j] += w * mu[j];
            }
        }
        m
    }

    /// Per-axis `(lo, hi)` covering every component mean ± `sigmas` standard deviations.
    pub fn support_bounds(&self, sigmas: f64) -> Vec<(f64, f64)> {
        (0..self.d)
            .map(|j| {
                self.means
                    .iter()
                    .zip(&self.std_devs)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (m, s)| {
                        (lo.min(m[j] - sigmas * s[j]), hi.max(m[j] + sigmas * s[j]))
                    })
            })
            .collect()
    }
}
