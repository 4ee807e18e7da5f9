//! Matérn (ν = 2) correlation, Gaussian-process priors, and the pointwise
//! 2×2 cross-channel correlation blocks.

use super::bessel::bessel_k2;
use crate::error::{Error, Result};
use crate::fdata::Grid;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Added to the diagonal of every correlation matrix before factorization.
pub const MATERN_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternKernel {
    /// Range `a`, in grid units.
    pub range: f64,
    /// Marginal variance `s²`.
    pub scale: f64,
}

impl MaternKernel {
    pub fn new(range: f64, scale: f64) -> Result<Self> {
        if !(range > 0.0 && range.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Matérn kernel needs positive range and scale, got a={range}, s2={scale}"
            )));
        }
        Ok(Self { range, scale })
    }

    /// `s² (Γ + jitter·I)` on the grid.
    pub fn covariance(&self, grid: &Grid) -> DMatrix<f64> {
        let mut c = matern_corr(self.range, grid);
        for i in 0..c.nrows() {
            c[(i, i)] += MATERN_JITTER;
        }
        c * self.scale
    }
}

/// `Γ(d) = ½ (d/a)² K₂(d/a)`, with `Γ(0) = 1`.
pub fn matern_value(d: f64, range: f64) -> f64 {
    let u = d.abs() / range;
    if u == 0.0 {
        1.0
    } else if u > 700.0 {
        0.0
    } else {
        (0.5 * u * u * bessel_k2(u)).min(1.0)
    }
}

/// Matérn ν = 2 correlation matrix on the grid (no jitter).
pub fn matern_corr(range: f64, grid: &Grid) -> DMatrix<f64> {
    let p = grid.points();
    DMatrix::from_fn(p.len(), p.len(), |i, j| matern_value(p[i] - p[j], range))
}

/// A factorized Gaussian-process prior on the grid.
#[derive(Debug, Clone)]
pub struct GpPrior {
    chol: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    log_det: f64,
}

impl GpPrior {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        let chol = Cholesky::new(cov).ok_or_else(|| Error::NotPositiveDefinite(format!("{n}×{n} GP covariance")))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(Self {
            chol,
            precision,
            log_det,
        })
    }

    pub fn from_kernel(kernel: &MaternKernel, grid: &Grid) -> Result<Self> {
        Self::new(kernel.covariance(grid))
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn cholesky_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `xᵀ Σ⁻¹ x` for a centered vector.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.precision * &v))
    }

    pub fn logdensity(&self, x: &[f64], mean: &[f64]) -> f64 {
        let centered: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        -0.5 * (self.dim() as f64 * (2.0 * PI).ln() + self.log_det + self.quad_form(&centered))
    }

    /// `mean + L z`.
    pub fn sample_with(&self, mean: &[f64], z: &[f64]) -> Vec<f64> {
        let l = self.chol.l_dirty();
        (0..mean.len())
            .map(|i| mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

/// Log-density of a log-variance curve under its Log-GP prior.
pub fn log_gp_prior_logdensity(log_var_curve: &[f64], mean_curve: &[f64], prior: &GpPrior) -> f64 {
    prior.logdensity(log_var_curve, mean_curve)
}

/// Bivariate normal log-density of a centered pair with variances `var` and
/// correlation `rho`.
pub fn pair_block_logdensity(e: [f64; 2], var: [f64; 2], rho: f64) -> f64 {
    pair_loglik_stats(1.0, [e[0] * e[0], e[0] * e[1], e[1] * e[1]], var, rho)
}

/// Log-likelihood of `n` centered bivariate normal pairs summarized by
/// `s = [Σe₁², Σe₁e₂, Σe₂²]`.
pub fn pair_loglik_stats(n: f64, s: [f64; 3], var: [f64; 2], rho: f64) -> f64 {
    let one_m = 1.0 - rho * rho;
    let (sd1, sd2) = (var[0].sqrt(), var[1].sqrt());
    let quad = (s[0] / var[0] - 2.0 * rho * s[1] / (sd1 * sd2) + s[2] / var[1]) / one_m;
    -n * (2.0 * PI).ln() - 0.5 * n * (var[0].ln() + var[1].ln() + one_m.ln()) - 0.5 * quad
}

/// Cross-channel correlation that is `ρ(t)` between channels at the same grid
/// point and zero elsewhere, so densities factor into 2×2 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedCorr {
    rho: Vec<f64>,
}

impl SimplifiedCorr {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if let Some(t) = rho.iter().position(|r| !(r.abs() < 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "correlation {} at grid index {t} is outside (-1, 1)",
                rho[t]
            )));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `[[1, ρ(t)], [ρ(t), 1]]`.
    pub fn block(&self, t: usize) -> [[f64; 2]; 2] {
        [[1.0, self.rho[t]], [self.rho[t], 1.0]]
    }

    pub fn block_det(&self, t: usize) -> f64 {
        1.0 - self.rho[t] * self.rho[t]
    }

    /// Joint log-density of centered channel curves `e1`, `e2` with pointwise
    /// variances `v1`, `v2`.
    pub fn logdensity(&self, e1: &[f64], e2: &[f64], v1: &[f64], v2: &[f64]) -> f64 {
        (0..self.rho.len())
            .map(|t| pair_block_logdensity([e1[t], e2[t]], [v1[t], v2[t]], self.rho[t]))
            .sum()
    }

    /// Dense `2T × 2T` covariance with channel-major ordering.
    pub fn dense_covariance(&self, v1: &[f64], v2: &[f64]) -> DMatrix<f64> {
        let t = self.rho.len();
        let mut m = DMatrix::zeros(2 * t, 2 * t);
        for p in 0..t {
            m[(p, p)] = v1[p];
            m[(t + p, t + p)] = v2[p];
            let c = self.rho[p] * (v1[p] * v2[p]).sqrt();
            m[(p, t + p)] = c;
            m[(t + p, p)] = c;
        }
        m
    }
}
