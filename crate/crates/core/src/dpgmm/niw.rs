//! Normal-inverse-Wishart algebra shared by the prior and the per-component
//! variational posteriors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// `Σ ~ IW(nu, scale)`, `μ | Σ ~ N(mean, Σ / kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub nu: f64,
    pub scale: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub kappa: f64,
}

impl NiwParams {
    pub fn new(nu: f64, scale: DMatrix<f64>, mean: DVector<f64>, kappa: f64) -> Result<Self> {
        let p = Self {
            nu,
            scale,
            mean,
            kappa,
        };
        p.validate()?;
        Ok(p)
    }

    /// Isotropic convenience constructor, `scale = variance * I`.
    pub fn isotropic(mean: Vec<f64>, variance: f64, kappa: f64, nu: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(
            nu,
            DMatrix::identity(d, d) * variance,
            DVector::from_vec(mean),
            kappa,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::config("dpgmm.base", "dimension must be at least 1"));
        }
        if self.scale.nrows() != d || self.scale.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.scale.nrows(),
            });
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::config("dpgmm.kappa", format!("must be positive, got {}", self.kappa)));
        }
        // the plug-in predictive needs E[Σ], which exists only for nu > d + 1
        if !(self.nu > d as f64 + 1.0) || !self.nu.is_finite() {
            return Err(Error::config(
                "dpgmm.nu",
                format!("must exceed d + 1 = {}, got {}", d + 1, self.nu),
            ));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("dpgmm.phi", "base mean must be finite"));
        }
        let symmetric = (0..d).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self.scale[(i, j)], self.scale[(j, i)]);
                (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
            })
        });
        if !symmetric || self.scale.clone().cholesky().is_none() {
            return Err(Error::config(
                "dpgmm.scale",
                "scale matrix must be symmetric positive-definite",
            ));
        }
        Ok(())
    }

    /// `E[Σ] = scale / (nu − d − 1)`.
    pub fn expected_covariance(&self) -> DMatrix<f64> {
        &self.scale / (self.nu - self.dim() as f64 - 1.0)
    }

    /// Conjugate update of the prior with weighted sufficient statistics.
    pub fn posterior(&self, stats: &SuffStats) -> NiwParams {
        let n = stats.count;
        let kappa = self.kappa + n;
        let nu = self.nu + n;
        let diff = &stats.mean - &self.mean;
        let mean = (&self.mean * self.kappa + &stats.mean * n) / kappa;
        let scale = &self.scale + &stats.scatter + (&diff * diff.transpose()) * (self.kappa * n / kappa);
        let scale = (&scale + scale.transpose()) * 0.5;
        NiwParams {
            nu,
            scale,
            mean,
            kappa,
        }
    }

    pub(crate) fn cache(&self) -> NiwCache {
        let d = self.dim();
        let chol = self
            .scale
            .clone()
            .cholesky()
            .expect("scale matrices stay positive-definite");
        let l = chol.l();
        let log_det_scale = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let e_log_det_precision = (1..=d)
            .map(|i| digamma((self.nu + 1.0 - i as f64) / 2.0))
            .sum::<f64>()
            + d as f64 * LN_2
            - log_det_scale;
        let scale_inv = chol.inverse();
        NiwCache {
            d,
            mean: self.mean.iter().copied().collect(),
            chol: flatten_lower(&l),
            log_det_scale,
            e_log_det_precision,
            kappa: self.kappa,
            nu: self.nu,
            scale: self.scale.clone(),
            scale_inv,
        }
    }
}

fn flatten_lower(l: &DMatrix<f64>) -> Vec<f64> {
    let d = l.nrows();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            out[i * d + j] = l[(i, j)];
        }
    }
    out
}

/// Squared Mahalanobis norm `vᵀ (L Lᵀ)⁻¹ v` for a row-major lower-triangular `L`.
pub(crate) fn chol_quad(chol: &[f64], d: usize, v: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        let mut s = v[i];
        for j in 0..i {
            s -= chol[i * d + j] * v[j];
        }
        v[i] = s / chol[i * d + i];
        acc += v[i] * v[i];
    }
    acc
}

/// Weighted sufficient statistics of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    /// Responsibility mass `N_k`.
    pub count: f64,
    /// Responsibility-weighted mean.
    pub mean: DVector<f64>,
    /// `Σ_n r_nk (x_n − mean)(x_n − mean)ᵀ`, unnormalized.
    pub scatter: DMatrix<f64>,
}

impl SuffStats {
    pub fn empty(d: usize) -> Self {
        Self {
            count: 0.0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
        }
    }
}

/// Per-component quantities reused across events.
#[derive(Debug, Clone)]
pub(crate) struct NiwCache {
    pub d: usize,
    pub mean: Vec<f64>,
    pub chol: Vec<f64>,
    pub log_det_scale: f64,
    /// `E[ln |Λ|]` under the Wishart on the precision.
    pub e_log_det_precision: f64,
    pub kappa: f64,
    pub nu: f64,
    pub scale: DMatrix<f64>,
    pub scale_inv: DMatrix<f64>,
}

impl NiwCache {
    /// `E[(x − μ)ᵀ Λ (x − μ)] = d / kappa + nu (x − m)ᵀ scale⁻¹ (x − m)`.
    pub fn expected_quad(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        for i in 0..self.d {
            buf[i] = x[i] - self.mean[i];
        }
        self.d as f64 / self.kappa + self.nu * chol_quad(&self.chol, self.d, buf)
    }

    /// `E_q[ln N(x | μ, Λ⁻¹)]`.
    pub fn expected_log_likelihood(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let d = self.d as f64;
        0.5 * self.e_log_det_precision
            - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * self.expected_quad(x, buf)
    }
}

/// `ln Γ_d(a)`.
fn ln_multigamma(d: usize, a: f64) -> f64 {
    (d * (d.saturating_sub(1))) as f64 / 4.0 * LN_PI
        + (1..=d).map(|i| ln_gamma(a + (1.0 - i as f64) / 2.0)).sum::<f64>()
}

/// Log normalizer `ln B(W, ν)` of a Wishart on the precision, written with `Ψ = W⁻¹`.
fn ln_wishart_norm(log_det_scale: f64, nu: f64, d: usize) -> f64 {
    0.5 * nu * log_det_scale - 0.5 * nu * d as f64 * LN_2 - ln_multigamma(d, nu / 2.0)
}

/// `KL(q || p)` between two normal-inverse-Wishart distributions.
pub(crate) fn kl_niw(q: &NiwCache, p: &NiwCache) -> f64 {
    let d = q.d;
    let df = d as f64;
    let diff: Vec<f64> = (0..d).map(|i| q.mean[i] - p.mean[i]).collect();
    let mut buf = diff.clone();
    let mean_quad = chol_quad(&q.chol, d, &mut buf);
    let gauss = 0.5
        * (df * p.kappa / q.kappa - df + p.kappa * q.nu * mean_quad - df * (p.kappa / q.kappa).ln());

    let trace = (&p.scale * &q.scale_inv).trace();
    let wishart = ln_wishart_norm(q.log_det_scale, q.nu, d) - ln_wishart_norm(p.log_det_scale, p.nu, d)
        + 0.5 * (q.nu - p.nu) * q.e_log_det_precision
        - 0.5 * q.nu * df
        + 0.5 * q.nu * trace;
    gauss + wishart
}
