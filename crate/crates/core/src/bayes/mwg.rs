//! Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order:
//! 1. each `Σ_α(t)` by independence Metropolis–Hastings with the effects
//!    integrated out, then each random-effect pair `α_i(t)` (conjugate 2×2);
//! 2. the mean curves `(μ₁, μ₂)` jointly (conjugate `2T`-dimensional Gaussian);
//! 3. per family, with the hyper-mean `h` integrated out: blocked random-walk
//!    Metropolis on each log-variance curve, elliptical slice steps on the
//!    difference curve, pointwise moves on the sum curve and on `Σ(t)`; then
//!    an exact redraw of `(δ, h)` and, given `h`, elliptical slice moves that
//!    carry `ρ` along with one curve;
//! 4. every `ρ_ε(t)` and `ρ_α(t)` by random-walk Metropolis on the Fisher-z scale;
//! 5. each mixture indicator jointly with its hyper-mean curve (exact).

use super::kernel::pair_loglik_stats;
use super::model::{
    draw_pair, effect_stats, inv2, normals, pair_cov, BandSide, DataSummary, Families, HyperPrior, ModelState,
    PairFamily, PriorSpec,
};
use super::posterior::{split_rhat, ChainDiagnostics, PosteriorDraws, SamplerDiagnostics, RHAT_WARNING};
use crate::error::{Error, Result};
use crate::fdata::{CurveMatrix, GroupedPairedSample};
use crate::rng::{substream, StreamRng};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::ChiSquared;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

const ADAPT_WINDOW: usize = 50;
const LOW_ACCEPT: f64 = 0.2;
const HIGH_ACCEPT: f64 = 0.4;
const SLICE_STEPS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwgConfig {
    pub chains: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Random-walk steps per log-variance block per sweep.
    #[serde(default = "default_mh_steps")]
    pub mh_steps: usize,
    /// Elliptical slice steps on each family's curve difference per sweep.
    #[serde(default = "default_slice_steps")]
    pub slice_steps: usize,
    /// Tune proposals during burn-in; frozen afterwards either way.
    #[serde(default = "default_true")]
    pub adapt: bool,
    /// Drop the response likelihood and sample the prior.
    #[serde(default)]
    pub prior_only: bool,
}

fn default_mh_steps() -> usize {
    3
}

fn default_slice_steps() -> usize {
    SLICE_STEPS
}

fn default_true() -> bool {
    true
}

impl MwgConfig {
    pub fn new(chains: usize, iters: usize, burnin: usize, thin: usize, seed: u64) -> Self {
        Self {
            chains,
            iters,
            burnin,
            thin,
            seed,
            mh_steps: default_mh_steps(),
            slice_steps: default_slice_steps(),
            adapt: true,
            prior_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.thin == 0 || self.mh_steps == 0 {
            return Err(Error::InvalidConfig(
                "chains, thin and mh_steps must be positive".into(),
            ));
        }
        if self.iters <= self.burnin {
            return Err(Error::InvalidConfig(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iters, self.burnin
            )));
        }
        if (self.iters - self.burnin) / self.thin == 0 {
            return Err(Error::InvalidConfig(
                "no draws retained after burn-in and thinning".into(),
            ));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }
}

#[derive(Debug, Clone)]
struct RwBlock {
    chol: DMatrix<f64>,
    scale: f64,
    window: (usize, usize),
    total: (usize, usize),
    history: Vec<Vec<f64>>,
}

impl RwBlock {
    fn diagonal(t: usize, var: f64) -> Self {
        Self {
            chol: DMatrix::identity(t, t) * var.sqrt(),
            scale: 1.0,
            window: (0, 0),
            total: (0, 0),
            history: Vec::new(),
        }
    }

    fn propose(&self, x: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        let z = DVector::from_vec(normals(rng, x.len()));
        let step = &self.chol * z;
        x.iter().zip(step.iter()).map(|(a, s)| a + self.scale * s).collect()
    }

    fn record(&mut self, accepted: bool) {
        self.window.1 += 1;
        self.total.1 += 1;
        if accepted {
            self.window.0 += 1;
            self.total.0 += 1;
        }
    }

    fn rate(&self) -> f64 {
        if self.total.1 == 0 {
            0.0
        } else {
            self.total.0 as f64 / self.total.1 as f64
        }
    }

    /// Switch to the regularized empirical covariance of the history so far.
    fn use_history(&mut self) {
        let t = self.chol.nrows();
        let m = self.history.len();
        if m < 2 * t.max(2) {
            return;
        }
        let mean: Vec<f64> = (0..t)
            .map(|p| self.history.iter().map(|h| h[p]).sum::<f64>() / m as f64)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(t, t);
        for h in &self.history {
            for i in 0..t {
                for j in 0..t {
                    cov[(i, j)] += (h[i] - mean[i]) * (h[j] - mean[j]);
                }
            }
        }
        cov /= (m - 1) as f64;
        let diag = DMatrix::from_diagonal(&cov.diagonal());
        let reg = cov * 0.9 + diag * 0.1 + DMatrix::identity(t, t) * 1e-10;
        if let Some(ch) = Cholesky::new(reg) {
            self.chol = ch.l();
            self.scale = 2.38 / (t as f64).sqrt();
        }
    }
}

fn tune(scale: &mut f64, window: &mut (usize, usize)) {
    if window.1 == 0 {
        return;
    }
    let rate = window.0 as f64 / window.1 as f64;
    if rate < LOW_ACCEPT {
        *scale *= 0.7;
    } else if rate > HIGH_ACCEPT {
        *scale *= 1.4;
    }
    *window = (0, 0);
}

#[derive(Debug, Clone)]
struct PointTuner {
    step: Vec<f64>,
    window: Vec<(usize, usize)>,
    total: (usize, usize),
}

impl PointTuner {
    fn new(t: usize, n_obs: usize) -> Self {
        let step = if n_obs > 0 { 2.4 / (n_obs as f64).sqrt() } else { 1.0 };
        Self {
            step: vec![step.min(1.0); t],
            window: vec![(0, 0); t],
            total: (0, 0),
        }
    }

    fn record(&mut self, p: usize, accepted: bool) {
        self.window[p].1 += 1;
        self.total.1 += 1;
        if accepted {
            self.window[p].0 += 1;
            self.total.0 += 1;
        }
    }

    fn tune(&mut self) {
        for (step, window) in self.step.iter_mut().zip(&mut self.window) {
            tune(step, window);
        }
    }

    fn reset(&mut self) {
        self.total = (0, 0);
        self.window.iter_mut().for_each(|w| *w = (0, 0));
    }

    fn rate(&self) -> f64 {
        if self.total.1 == 0 {
            0.0
        } else {
            self.total.0 as f64 / self.total.1 as f64
        }
    }
}

/// One elliptical slice sampling step for `x ~ N(mean, C) · exp(loglik(x))`,
/// given an auxiliary draw `nu ~ N(0, C)`.
fn elliptical_slice(
    mean: &[f64],
    nu: Vec<f64>,
    x: Vec<f64>,
    loglik: impl Fn(&[f64]) -> f64,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let threshold = loglik(&x) + rng.random::<f64>().ln();
    let mut angle = rng.random_range(0.0..TAU);
    let (mut lo, mut hi) = (angle - TAU, angle);
    loop {
        let (c, sn) = (angle.cos(), angle.sin());
        let prop: Vec<f64> = (0..x.len())
            .map(|p| mean[p] + (x[p] - mean[p]) * c + nu[p] * sn)
            .collect();
        let ll = loglik(&prop);
        if ll.is_finite() && ll > threshold {
            return prop;
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        if hi - lo < 1e-12 {
            return x;
        }
        angle = rng.random_range(lo..hi);
    }
}

/// Draw `Σ ~ W⁻¹(S, ν)` for a 2×2 scale `S = [s11, s12; s12, s22]` by the
/// Bartlett decomposition of `Σ⁻¹ ~ W(S⁻¹, ν)`; returns `[Σ11, Σ12, Σ22]`.
fn inverse_wishart_2x2(rng: &mut StreamRng, dof: f64, s: [f64; 3]) -> Option<[f64; 3]> {
    let det = s[0] * s[2] - s[1] * s[1];
    // Cholesky factor of S⁻¹ = [s22, −s12; −s12, s11] / det.
    let (i11, i12, i22) = (s[2] / det, -s[1] / det, s[0] / det);
    let l11 = i11.sqrt();
    let l21 = i12 / l11;
    let l22 = (i22 - l21 * l21).max(0.0).sqrt();
    let c1 = rng.sample::<f64, _>(ChiSquared::new(dof).ok()?).sqrt();
    let c2 = rng.sample::<f64, _>(ChiSquared::new(dof - 1.0).ok()?).sqrt();
    let z: f64 = normals(rng, 1)[0];
    // W = (L·B)(L·B)ᵀ with B = [c1, 0; z, c2].
    let m11 = l11 * c1;
    let m21 = l21 * c1 + l22 * z;
    let m22 = l22 * c2;
    let (w11, w12, w22) = (m11 * m11, m11 * m21, m21 * m21 + m22 * m22);
    let wdet = w11 * w22 - w12 * w12;
    if !(wdet > 0.0) {
        return None;
    }
    Some([w22 / wdet, -w12 / wdet, w11 / wdet])
}

fn rate_of((accepted, total): (usize, usize)) -> f64 {
    if total == 0 {
        0.0
    } else {
        accepted as f64 / total as f64
    }
}

/// `log N(e; 0, c)` without the `2π` term.
fn gauss2(c: [[f64; 2]; 2], e: [f64; 2]) -> f64 {
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let quad = (c[1][1] * e[0] * e[0] - 2.0 * c[0][1] * e[0] * e[1] + c[0][0] * e[1] * e[1]) / det;
    -0.5 * (det.ln() + quad)
}

/// Which log-variance curve a block updates.
#[derive(Debug, Clone, Copy)]
enum VarBlock {
    Eps(usize),
    Alpha(usize),
}

/// Conditional target of one log-variance curve: its Gaussian-process prior
/// times the pairwise likelihood with the other channel held fixed.
struct VarContext<'a> {
    j: usize,
    fam: &'a PairFamily,
    prior_mean: Vec<f64>,
    other: Vec<f64>,
    rho: Vec<f64>,
    n: f64,
    with_lik: bool,
}

impl VarContext<'_> {
    fn loglik(&self, x: &[f64], stats: &[[f64; 3]]) -> f64 {
        if !self.with_lik {
            return 0.0;
        }
        (0..x.len())
            .map(|p| {
                let mut v = [self.other[p].exp(); 2];
                v[self.j] = x[p].exp();
                pair_loglik_stats(self.n, stats[p], v, self.rho[p])
            })
            .sum()
    }

    fn target(&self, x: &[f64], stats: &[[f64; 3]]) -> f64 {
        self.fam.cross.logdensity(x, &self.prior_mean) + self.loglik(x, stats)
    }
}

/// A Metropolis-within-Gibbs sampler bound to one dataset and prior.
#[derive(Debug, Clone)]
pub struct MwgSampler {
    fam: Families,
    data: DataSummary,
    t: usize,
    prior_only: bool,
    mh_steps: usize,
    slice_steps: usize,
    adapt: bool,
    blocks: [RwBlock; 4],
    rho: [PointTuner; 2],
    levels: [PointTuner; 2],
    local: [(usize, usize); 2],
    marginal: (usize, usize),
}

impl MwgSampler {
    pub fn new(data: &GroupedPairedSample, prior: &PriorSpec, cfg: &MwgConfig) -> Result<Self> {
        let fam = Families::new(prior)?;
        if cfg.prior_only && prior.hyper == HyperPrior::Flat {
            return Err(Error::InvalidConfig(
                "prior-only sampling needs a proper hyper-prior; the flat one is improper".into(),
            ));
        }
        if data.grid != *prior.grid() {
            return Err(Error::InvalidGrid("data and prior bands use different grids".into()));
        }
        let summary = DataSummary::new(data);
        let t = data.grid.len();
        let n = summary.total();
        let a = summary.sizes.len();
        let eps_var = if cfg.prior_only { 0.1 } else { 2.0 / n as f64 };
        let alpha_var = 2.0 / a as f64;
        Ok(Self {
            fam,
            t,
            prior_only: cfg.prior_only,
            mh_steps: cfg.mh_steps,
            slice_steps: cfg.slice_steps,
            adapt: cfg.adapt,
            blocks: [
                RwBlock::diagonal(t, eps_var),
                RwBlock::diagonal(t, eps_var),
                RwBlock::diagonal(t, alpha_var),
                RwBlock::diagonal(t, alpha_var),
            ],
            rho: [
                PointTuner::new(t, if cfg.prior_only { 0 } else { n }),
                PointTuner::new(t, a),
            ],
            levels: [
                PointTuner::new(t, if cfg.prior_only { 0 } else { n }),
                PointTuner::new(t, a),
            ],
            local: [(0, 0); 2],
            marginal: (0, 0),
            data: summary,
        })
    }

    /// Replace the responses, keeping tuned proposals.
    pub fn set_data(&mut self, data: &GroupedPairedSample) -> Result<()> {
        if data.grid.len() != self.t {
            return Err(Error::InvalidGrid("replacement data use a different grid".into()));
        }
        self.data = DataSummary::new(data);
        Ok(())
    }

    /// Data-driven starting point, overdispersed across chains.
    pub fn initial_state(&self, rng: &mut StreamRng) -> ModelState {
        let t = self.t;
        let a = self.data.sizes.len();
        let n = self.data.total();
        let alpha = self.data.means.clone();
        let floor = |v: f64| if v.is_finite() && v > 1e-12 { v } else { 1e-12 };
        let mut mu = [vec![0.0; t], vec![0.0; t]];
        let mut log_s2_eps = [vec![0.0; t], vec![0.0; t]];
        let mut log_s2_alpha = [vec![0.0; t], vec![0.0; t]];
        for j in 0..2 {
            let z: f64 = normals(rng, 1)[0];
            let shift_eps = rng.random_range(-1.0..1.0);
            let shift_alpha = rng.random_range(-1.0..1.0);
            for p in 0..t {
                let gm: Vec<f64> = alpha.iter().map(|g| g[j][p]).collect();
                let m = gm.iter().sum::<f64>() / a as f64;
                let between = gm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (a - 1).max(1) as f64;
                mu[j][p] = m + z * (between / a as f64).sqrt();
                let within: f64 =
                    self.data.within.iter().map(|w| w[p][2 * j]).sum::<f64>() / (n.saturating_sub(a)).max(1) as f64;
                log_s2_eps[j][p] = floor(within).ln() + shift_eps;
                log_s2_alpha[j][p] = floor(between).ln() + shift_alpha;
            }
        }
        let jitter = |rng: &mut StreamRng| rng.random_range(-0.3..0.3);
        let rho_eps: Vec<f64> = (0..t).map(|_| jitter(rng)).collect();
        let rho_alpha: Vec<f64> = (0..t).map(|_| jitter(rng)).collect();
        let side = |rng: &mut StreamRng| {
            if rng.random::<bool>() {
                BandSide::Upper
            } else {
                BandSide::Lower
            }
        };
        let delta_mu = side(rng);
        let delta_eps = side(rng);
        let delta_alpha = side(rng);
        let hyper = |fam: &PairFamily, x: &[Vec<f64>; 2], s: BandSide| -> Vec<f64> {
            let d = fam.offset(s);
            (0..t).map(|p| 0.5 * (x[0][p] + x[1][p] + d[p])).collect()
        };
        ModelState {
            mu0: hyper(&self.fam.mean, &mu, delta_mu),
            tau_eps: hyper(&self.fam.eps, &log_s2_eps, delta_eps),
            tau_alpha: hyper(&self.fam.alpha, &log_s2_alpha, delta_alpha),
            mu,
            alpha,
            log_s2_eps,
            log_s2_alpha,
            rho_eps,
            rho_alpha,
            delta_mu,
            delta_eps,
            delta_alpha,
        }
    }

    /// Pointwise Metropolis–Hastings on `Σ_α(t)` with the effects integrated
    /// out, `ȳᵢ(t) ~ N(μ(t), Σ_α(t) + Σ_ε(t)/nᵢ)`. The independence proposal
    /// draws `Σ_α + E`, with `E = Σ_ε/n̄` at the harmonic mean size, from the
    /// inverse Wishart fitted to the scatter of `ȳᵢ(t) − μ(t)`; in balanced
    /// designs the likelihood then cancels and the ratio keeps the prior given
    /// `h` and the Jacobian `(v₁v₂)^{-3/2}`. The effects must be redrawn
    /// immediately afterwards.
    fn marginal_effect_covariance(&mut self, s: &mut ModelState, rng: &mut StreamRng) {
        let a = s.alpha.len();
        if self.prior_only || a < 5 {
            return;
        }
        let t = self.t;
        let fam = &self.fam.alpha;
        let q = fam.gp.precision();
        let m = fam.means(&s.tau_alpha, s.delta_alpha);
        let x = &mut s.log_s2_alpha;
        let mut r: [DVector<f64>; 2] = std::array::from_fn(|j| q * DVector::from_fn(t, |p, _| x[j][p] - m[j][p]));
        let dof = (a - 3) as f64;
        let inv_size = self.data.sizes.iter().map(|&n| 1.0 / n as f64).sum::<f64>() / a as f64;
        for p in 0..t {
            let mu = [s.mu[0][p], s.mu[1][p]];
            let resid: Vec<[f64; 2]> = (0..a)
                .map(|i| [self.data.means[i][0][p] - mu[0], self.data.means[i][1][p] - mu[1]])
                .collect();
            let scatter = resid.iter().fold([0.0; 3], |acc, e| {
                [acc[0] + e[0] * e[0], acc[1] + e[0] * e[1], acc[2] + e[1] * e[1]]
            });
            let err = pair_cov(s.log_s2_eps[0][p].exp(), s.log_s2_eps[1][p].exp(), s.rho_eps[p]);
            let sizes = &self.data.sizes;
            let shift = |sig: [[f64; 2]; 2], w: f64| -> [[f64; 2]; 2] {
                [
                    [sig[0][0] + w * err[0][0], sig[0][1] + w * err[0][1]],
                    [sig[1][0] + w * err[1][0], sig[1][1] + w * err[1][1]],
                ]
            };
            // Marginal log-likelihood minus the log proposal kernel, both up to constants.
            let excess = |sig: [[f64; 2]; 2]| -> f64 {
                resid
                    .iter()
                    .enumerate()
                    .map(|(i, e)| gauss2(shift(sig, 1.0 / sizes[i] as f64), *e) - gauss2(shift(sig, inv_size), *e))
                    .sum::<f64>()
            };
            self.marginal.1 += 1;
            let Some(w) = inverse_wishart_2x2(rng, dof, scatter) else {
                continue;
            };
            let prop = [
                w[0] - inv_size * err[0][0],
                w[1] - inv_size * err[0][1],
                w[2] - inv_size * err[1][1],
            ];
            if !(prop[0] > 0.0 && prop[2] > 0.0 && prop[0] * prop[2] > prop[1] * prop[1]) {
                continue;
            }
            let (na, nb) = (prop[0].ln(), prop[2].ln());
            let nr = prop[1] / (prop[0] * prop[2]).sqrt();
            if !(na.is_finite() && nb.is_finite() && nr.abs() < 1.0) {
                continue;
            }
            let cur = pair_cov(x[0][p].exp(), x[1][p].exp(), s.rho_alpha[p]);
            let new = pair_cov(prop[0], prop[2], nr);
            let da = na - x[0][p];
            let db = nb - x[1][p];
            let log_ratio = excess(new)
                - excess(cur)
                - (da * r[0][p] + 0.5 * da * da * q[(p, p)])
                - (db * r[1][p] + 0.5 * db * db * q[(p, p)])
                - 1.5 * (da + db);
            let accept = log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio;
            if accept {
                x[0][p] = na;
                x[1][p] = nb;
                s.rho_alpha[p] = nr;
                r[0] += q.column(p) * da;
                r[1] += q.column(p) * db;
            }
            self.marginal.0 += accept as usize;
        }
    }

    fn draw_effects(&self, s: &mut ModelState, rng: &mut StreamRng) {
        for p in 0..self.t {
            let prior_prec = inv2(pair_cov(
                s.log_s2_alpha[0][p].exp(),
                s.log_s2_alpha[1][p].exp(),
                s.rho_alpha[p],
            ));
            let err_prec = inv2(pair_cov(
                s.log_s2_eps[0][p].exp(),
                s.log_s2_eps[1][p].exp(),
                s.rho_eps[p],
            ));
            let mu = [s.mu[0][p], s.mu[1][p]];
            for i in 0..s.alpha.len() {
                let n = if self.prior_only {
                    0.0
                } else {
                    self.data.sizes[i] as f64
                };
                let y = [self.data.means[i][0][p], self.data.means[i][1][p]];
                let mut prec = [[0.0; 2]; 2];
                let mut b = [0.0; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        prec[r][c] = prior_prec[r][c] + n * err_prec[r][c];
                        b[r] += prior_prec[r][c] * mu[c] + n * err_prec[r][c] * y[c];
                    }
                }
                let cov = inv2(prec);
                let mean = [cov[0][0] * b[0] + cov[0][1] * b[1], cov[1][0] * b[0] + cov[1][1] * b[1]];
                let v = draw_pair(rng, mean, cov);
                s.alpha[i][0][p] = v[0];
                s.alpha[i][1][p] = v[1];
            }
        }
    }

    fn draw_means(&self, s: &mut ModelState, rng: &mut StreamRng) -> Result<()> {
        let t = self.t;
        let q = self.fam.mean.gp.precision();
        let m = self.fam.mean.means(&s.mu0, s.delta_mu);
        let a = s.alpha.len() as f64;
        let mut prec = DMatrix::<f64>::zeros(2 * t, 2 * t);
        prec.view_mut((0, 0), (t, t)).copy_from(q);
        prec.view_mut((t, t), (t, t)).copy_from(q);
        let mut b = DVector::<f64>::zeros(2 * t);
        let qm1 = q * DVector::from_column_slice(&m[0]);
        let qm2 = q * DVector::from_column_slice(&m[1]);
        for p in 0..t {
            b[p] = qm1[p];
            b[t + p] = qm2[p];
            let pp = inv2(pair_cov(
                s.log_s2_alpha[0][p].exp(),
                s.log_s2_alpha[1][p].exp(),
                s.rho_alpha[p],
            ));
            let sum = [
                s.alpha.iter().map(|x| x[0][p]).sum::<f64>(),
                s.alpha.iter().map(|x| x[1][p]).sum::<f64>(),
            ];
            let idx = [p, t + p];
            for r in 0..2 {
                for c in 0..2 {
                    prec[(idx[r], idx[c])] += a * pp[r][c];
                    b[idx[r]] += pp[r][c] * sum[c];
                }
            }
        }
        let chol = Cholesky::new(prec).ok_or_else(|| Error::NonFiniteLogPosterior {
            block: "mean curves (precision not positive definite)".into(),
            state: s.dump(),
        })?;
        let mean = chol.solve(&b);
        let z = DVector::from_vec(normals(rng, 2 * t));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular factor");
        let draw = mean + noise;
        for p in 0..t {
            s.mu[0][p] = draw[p];
            s.mu[1][p] = draw[t + p];
        }
        Ok(())
    }

    fn family(&self, s: &ModelState, which: VarBlock) -> VarContext<'_> {
        match which {
            VarBlock::Eps(j) => VarContext {
                j,
                fam: &self.fam.eps,
                prior_mean: self.fam.eps.cross_mean(j, &s.log_s2_eps[1 - j], s.delta_eps),
                other: s.log_s2_eps[1 - j].clone(),
                rho: s.rho_eps.clone(),
                n: self.data.total() as f64,
                with_lik: !self.prior_only,
            },
            VarBlock::Alpha(j) => VarContext {
                j,
                fam: &self.fam.alpha,
                prior_mean: self.fam.alpha.cross_mean(j, &s.log_s2_alpha[1 - j], s.delta_alpha),
                other: s.log_s2_alpha[1 - j].clone(),
                rho: s.rho_alpha.clone(),
                n: s.alpha.len() as f64,
                with_lik: true,
            },
        }
    }

    fn update_variances(&mut self, s: &mut ModelState, rng: &mut StreamRng, record: bool) -> Result<()> {
        let eps_stats = self.data.residual_stats(&s.alpha);
        let alpha_stats = effect_stats(&s.alpha, &s.mu);
        for (b, which) in [
            VarBlock::Eps(0),
            VarBlock::Eps(1),
            VarBlock::Alpha(0),
            VarBlock::Alpha(1),
        ]
        .into_iter()
        .enumerate()
        {
            let stats = match which {
                VarBlock::Eps(_) => &eps_stats,
                VarBlock::Alpha(_) => &alpha_stats,
            };
            let ctx = self.family(s, which);
            let mut x = match which {
                VarBlock::Eps(j) => s.log_s2_eps[j].clone(),
                VarBlock::Alpha(j) => s.log_s2_alpha[j].clone(),
            };
            let mut lp = ctx.target(&x, stats);
            if !lp.is_finite() {
                return Err(Error::NonFiniteLogPosterior {
                    block: format!("{which:?} log-variance"),
                    state: s.dump(),
                });
            }
            let mut accepted = Vec::with_capacity(self.mh_steps);
            for _ in 0..self.mh_steps {
                let prop = self.blocks[b].propose(&x, rng);
                let lp_prop = ctx.target(&prop, stats);
                let accept = lp_prop.is_finite() && rng.random::<f64>().ln() < lp_prop - lp;
                if accept {
                    x = prop;
                    lp = lp_prop;
                }
                accepted.push(accept);
            }
            for a in accepted {
                self.blocks[b].record(a);
            }
            if record {
                self.blocks[b].history.push(x.clone());
            }
            match which {
                VarBlock::Eps(j) => s.log_s2_eps[j] = x,
                VarBlock::Alpha(j) => s.log_s2_alpha[j] = x,
            }
            // Both curves of the family are updated with `h` integrated out,
            // so `(δ, h)` is refreshed before the moves that condition on it.
            if let VarBlock::Eps(1) | VarBlock::Alpha(1) = which {
                for _ in 0..self.slice_steps {
                    self.difference_slice(s, which, stats, rng);
                }
                self.update_levels(s, which, stats, rng);
                self.local_wishart(s, which, stats, rng);
                self.redraw_hyper(s, which, rng);
                for j in 0..2 {
                    let block = match which {
                        VarBlock::Eps(_) => VarBlock::Eps(j),
                        VarBlock::Alpha(_) => VarBlock::Alpha(j),
                    };
                    self.regression_slice(s, block, stats, rng);
                    self.conditional_slice(s, block, stats, rng);
                }
            }
        }
        Ok(())
    }

    /// Elliptical slice move of `d = x₁ − x₂ ~ GP(δ, 2C)` with `x₁ + x₂` and
    /// `ρ` fixed.
    fn difference_slice(&self, s: &mut ModelState, family: VarBlock, stats: &[[f64; 3]], rng: &mut StreamRng) {
        let t = self.t;
        let (fam, curves, rho, side, n, with_lik) = match family {
            VarBlock::Eps(_) => (
                &self.fam.eps,
                &mut s.log_s2_eps,
                &s.rho_eps,
                s.delta_eps,
                self.data.total() as f64,
                !self.prior_only,
            ),
            VarBlock::Alpha(_) => (
                &self.fam.alpha,
                &mut s.log_s2_alpha,
                &s.rho_alpha,
                s.delta_alpha,
                s.alpha.len() as f64,
                true,
            ),
        };
        let u: Vec<f64> = (0..t).map(|p| curves[0][p] + curves[1][p]).collect();
        let d: Vec<f64> = (0..t).map(|p| curves[0][p] - curves[1][p]).collect();
        let loglik = |d: &[f64]| -> f64 {
            if !with_lik {
                return 0.0;
            }
            (0..t)
                .map(|p| {
                    let v = [(0.5 * (u[p] + d[p])).exp(), (0.5 * (u[p] - d[p])).exp()];
                    pair_loglik_stats(n, stats[p], v, rho[p])
                })
                .sum()
        };
        let nu = fam.diff.sample_with(&vec![0.0; t], &normals(rng, t));
        let d = elliptical_slice(fam.offset(side), nu, d, loglik, rng);
        for p in 0..t {
            curves[0][p] = 0.5 * (u[p] + d[p]);
            curves[1][p] = 0.5 * (u[p] - d[p]);
        }
    }

    /// Pointwise independence Metropolis–Hastings on `Σ(t)`, proposing from
    /// its normalized likelihood, the inverse Wishart with `n − 3` degrees of
    /// freedom and scale `S(t)`. The ratio keeps only the prior terms and the
    /// Jacobian `(v₁v₂)^{-3/2}` from `(log v₁, log v₂, ρ)` to `Σ`.
    fn local_wishart(&mut self, s: &mut ModelState, family: VarBlock, stats: &[[f64; 3]], rng: &mut StreamRng) {
        let (k, fam, curves, rho, side, n, with_lik) = match family {
            VarBlock::Eps(_) => (
                0,
                &self.fam.eps,
                &mut s.log_s2_eps,
                &mut s.rho_eps,
                s.delta_eps,
                self.data.total(),
                !self.prior_only,
            ),
            VarBlock::Alpha(_) => (
                1,
                &self.fam.alpha,
                &mut s.log_s2_alpha,
                &mut s.rho_alpha,
                s.delta_alpha,
                s.alpha.len(),
                true,
            ),
        };
        if !with_lik || n < 5 {
            return;
        }
        let t = self.t;
        let off = fam.offset(side);
        let pd = fam.diff.precision();
        let mut rd = pd * DVector::from_fn(t, |p, _| curves[0][p] - curves[1][p] - off[p]);
        let sum_mean = fam.sum_mean(side);
        let mut ru = match (&fam.sum_precision, &sum_mean) {
            (Some(pu), Some(m)) => Some((pu, pu * DVector::from_fn(t, |p, _| curves[0][p] + curves[1][p] - m[p]))),
            _ => None,
        };
        let dof = (n - 3) as f64;
        for p in 0..t {
            let [s11, s12, s22] = stats[p];
            let det = s11 * s22 - s12 * s12;
            if !(det > 0.0 && s11 > 0.0) {
                continue;
            }
            let Some(sigma) = inverse_wishart_2x2(rng, dof, [s11, s12, s22]) else {
                continue;
            };
            let (a, b) = (sigma[0].ln(), sigma[2].ln());
            let r_new = sigma[1] / (sigma[0] * sigma[2]).sqrt();
            if !(a.is_finite() && b.is_finite() && r_new.abs() < 1.0) {
                continue;
            }
            let dd = (a - b) - (curves[0][p] - curves[1][p]);
            let du = (a + b) - (curves[0][p] + curves[1][p]);
            let mut log_ratio = -(dd * rd[p] + 0.5 * dd * dd * pd[(p, p)]) - 1.5 * du;
            if let Some((pu, ruv)) = &ru {
                log_ratio -= du * ruv[p] + 0.5 * du * du * pu[(p, p)];
            }
            let accept = log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio;
            if accept {
                curves[0][p] = a;
                curves[1][p] = b;
                rho[p] = r_new;
                rd += pd.column(p) * dd;
                if let Some((pu, ruv)) = &mut ru {
                    *ruv += pu.column(p) * du;
                }
            }
            self.local[k].0 += accept as usize;
            self.local[k].1 += 1;
        }
    }

    /// Pointwise random-walk Metropolis on `u = x₁ + x₂` with `x₁ − x₂` and
    /// `ρ` fixed. Given `δ` the sum is independent of the difference once `h`
    /// is integrated out, and flat under the flat hyper-prior.
    fn update_levels(&mut self, s: &mut ModelState, family: VarBlock, stats: &[[f64; 3]], rng: &mut StreamRng) {
        let (k, fam, curves, rho, side, n, with_lik) = match family {
            VarBlock::Eps(_) => (
                0,
                &self.fam.eps,
                &mut s.log_s2_eps,
                &s.rho_eps,
                s.delta_eps,
                self.data.total() as f64,
                !self.prior_only,
            ),
            VarBlock::Alpha(_) => (
                1,
                &self.fam.alpha,
                &mut s.log_s2_alpha,
                &s.rho_alpha,
                s.delta_alpha,
                s.alpha.len() as f64,
                true,
            ),
        };
        let t = self.t;
        // r = P(u − E u) under the proper hyper-prior.
        let mut r = match (&fam.sum_precision, fam.sum_mean(side)) {
            (Some(prec), Some(mean)) => {
                let u = DVector::from_fn(t, |p, _| curves[0][p] + curves[1][p] - mean[p]);
                Some((prec, prec * u))
            }
            _ => None,
        };
        let lik = |a: f64, b: f64, p: usize| -> f64 {
            if with_lik {
                pair_loglik_stats(n, stats[p], [a.exp(), b.exp()], rho[p])
            } else {
                0.0
            }
        };
        for p in 0..t {
            let eps = self.levels[k].step[p] * normals(rng, 1)[0];
            let (a, b) = (curves[0][p], curves[1][p]);
            let mut diff = lik(a + 0.5 * eps, b + 0.5 * eps, p) - lik(a, b, p);
            if let Some((prec, rv)) = &r {
                diff -= eps * rv[p] + 0.5 * eps * eps * prec[(p, p)];
            }
            let accept = diff.is_finite() && rng.random::<f64>().ln() < diff;
            if accept {
                curves[0][p] += 0.5 * eps;
                curves[1][p] += 0.5 * eps;
                if let Some((prec, rv)) = &mut r {
                    *rv += prec.column(p) * eps;
                }
            }
            self.levels[k].record(p, accept);
        }
    }

    fn redraw_hyper(&self, s: &mut ModelState, family: VarBlock, rng: &mut StreamRng) {
        match family {
            VarBlock::Eps(_) => {
                let (d, h) = self.fam.eps.draw_indicator_and_hyper(rng, &s.log_s2_eps);
                s.delta_eps = d;
                s.tau_eps = h;
            }
            VarBlock::Alpha(_) => {
                let (d, h) = self.fam.alpha.draw_indicator_and_hyper(rng, &s.log_s2_alpha);
                s.delta_alpha = d;
                s.tau_alpha = h;
            }
        }
    }

    /// Elliptical slice move of channel `j`'s log-variance curve that holds
    /// the regression of the other channel on channel `j` fixed: the slope
    /// `β = ρ√(v_k/v_j)` and the conditional variance `v_k(1 − ρ²)`. The
    /// other curve and `ρ` follow deterministically; the target carries the
    /// Jacobian `(1 − ρ²)√(v_j/v_k)` of the reparameterization.
    fn regression_slice(&self, s: &mut ModelState, family: VarBlock, stats: &[[f64; 3]], rng: &mut StreamRng) {
        let t = self.t;
        let j = match family {
            VarBlock::Eps(j) | VarBlock::Alpha(j) => j,
        };
        let k = 1 - j;
        let (fam, curves, rho, h, side, n, with_lik) = match family {
            VarBlock::Eps(_) => (
                &self.fam.eps,
                &mut s.log_s2_eps,
                &mut s.rho_eps,
                &s.tau_eps,
                s.delta_eps,
                self.data.total() as f64,
                !self.prior_only,
            ),
            VarBlock::Alpha(_) => (
                &self.fam.alpha,
                &mut s.log_s2_alpha,
                &mut s.rho_alpha,
                &s.tau_alpha,
                s.delta_alpha,
                s.alpha.len() as f64,
                true,
            ),
        };
        let means = fam.means(h, side);
        let slope: Vec<f64> = (0..t)
            .map(|p| rho[p] * (0.5 * (curves[k][p] - curves[j][p])).exp())
            .collect();
        let cond: Vec<f64> = (0..t).map(|p| curves[k][p].exp() * (1.0 - rho[p] * rho[p])).collect();
        let follow = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let other: Vec<f64> = (0..t)
                .map(|p| (cond[p] + slope[p] * slope[p] * x[p].exp()).ln())
                .collect();
            let r: Vec<f64> = (0..t).map(|p| slope[p] * (0.5 * (x[p] - other[p])).exp()).collect();
            (other, r)
        };
        let loglik = |x: &[f64]| -> f64 {
            let (other, r) = follow(x);
            if r.iter().any(|v| !(v.abs() < 1.0)) {
                return f64::NEG_INFINITY;
            }
            let mut lp = fam.gp.logdensity(&other, &means[k]);
            for p in 0..t {
                lp += (1.0 - r[p] * r[p]).ln() + 0.5 * (x[p] - other[p]);
                if with_lik {
                    let mut v = [0.0; 2];
                    v[j] = x[p].exp();
                    v[k] = other[p].exp();
                    lp += pair_loglik_stats(n, stats[p], v, r[p]);
                }
            }
            lp
        };
        let nu = fam.gp.sample_with(&vec![0.0; t], &normals(rng, t));
        let x = elliptical_slice(&means[j], nu, curves[j].clone(), loglik, rng);
        let (other, r) = follow(&x);
        curves[j] = x;
        curves[k] = other;
        *rho = r;
    }

    /// Elliptical slice move of `x_j` given `h`, holding the other curve and
    /// the conditional variance `c = v_j(1 − ρ²)` fixed; `ρ` keeps its sign and
    /// follows as `ρ² = 1 − c/v_j`. The Jacobian of `ρ ↦ c` contributes
    /// `−x_j − ln|ρ|` per point.
    fn conditional_slice(&self, s: &mut ModelState, family: VarBlock, stats: &[[f64; 3]], rng: &mut StreamRng) {
        let t = self.t;
        let j = match family {
            VarBlock::Eps(j) | VarBlock::Alpha(j) => j,
        };
        let k = 1 - j;
        let (fam, curves, rho, h, side, n, with_lik) = match family {
            VarBlock::Eps(_) => (
                &self.fam.eps,
                &mut s.log_s2_eps,
                &mut s.rho_eps,
                &s.tau_eps,
                s.delta_eps,
                self.data.total() as f64,
                !self.prior_only,
            ),
            VarBlock::Alpha(_) => (
                &self.fam.alpha,
                &mut s.log_s2_alpha,
                &mut s.rho_alpha,
                &s.tau_alpha,
                s.delta_alpha,
                s.alpha.len() as f64,
                true,
            ),
        };
        let means = fam.means(h, side);
        let sign: Vec<f64> = rho.iter().map(|r| if *r < 0.0 { -1.0 } else { 1.0 }).collect();
        let cond: Vec<f64> = (0..t).map(|p| curves[j][p].exp() * (1.0 - rho[p] * rho[p])).collect();
        let follow = |x: &[f64]| -> Vec<f64> {
            (0..t)
                .map(|p| sign[p] * (1.0 - cond[p] * (-x[p]).exp()).max(0.0).sqrt())
                .collect()
        };
        let other = &curves[k];
        let loglik = |x: &[f64]| -> f64 {
            let r = follow(x);
            if r.iter().any(|v| !(v.abs() > 0.0 && v.abs() < 1.0)) {
                return f64::NEG_INFINITY;
            }
            let mut lp = 0.0;
            for p in 0..t {
                lp -= x[p] + r[p].abs().ln();
                if with_lik {
                    let mut v = [0.0; 2];
                    v[j] = x[p].exp();
                    v[k] = other[p].exp();
                    lp += pair_loglik_stats(n, stats[p], v, r[p]);
                }
            }
            lp
        };
        let nu = fam.gp.sample_with(&vec![0.0; t], &normals(rng, t));
        let x = elliptical_slice(&means[j], nu, curves[j].clone(), loglik, rng);
        *rho = follow(&x);
        curves[j] = x;
    }

    fn update_correlations(&mut self, s: &mut ModelState, rng: &mut StreamRng) {
        let eps_stats = self.data.residual_stats(&s.alpha);
        let alpha_stats = effect_stats(&s.alpha, &s.mu);
        for k in 0..2 {
            let (stats, n, with_lik) = if k == 0 {
                (&eps_stats, self.data.total() as f64, !self.prior_only)
            } else {
                (&alpha_stats, s.alpha.len() as f64, true)
            };
            for p in 0..self.t {
                let (v, rho) = if k == 0 {
                    ([s.log_s2_eps[0][p].exp(), s.log_s2_eps[1][p].exp()], s.rho_eps[p])
                } else {
                    ([s.log_s2_alpha[0][p].exp(), s.log_s2_alpha[1][p].exp()], s.rho_alpha[p])
                };
                // Uniform prior on ρ; the Jacobian of ρ = tanh z is 1 − ρ².
                let target = |r: f64| {
                    let lik = if with_lik {
                        pair_loglik_stats(n, stats[p], v, r)
                    } else {
                        0.0
                    };
                    lik + (1.0 - r * r).ln()
                };
                let z = rho.atanh();
                let z_prop = z + self.rho[k].step[p] * normals(rng, 1)[0];
                let r_prop = z_prop.tanh();
                let accept = r_prop.abs() < 1.0 && {
                    let diff = target(r_prop) - target(rho);
                    diff.is_finite() && rng.random::<f64>().ln() < diff
                };
                if accept {
                    if k == 0 {
                        s.rho_eps[p] = r_prop;
                    } else {
                        s.rho_alpha[p] = r_prop;
                    }
                }
                self.rho[k].record(p, accept);
            }
        }
    }

    fn update_indicators(&self, s: &mut ModelState, rng: &mut StreamRng) {
        let (d, h) = self.fam.mean.draw_indicator_and_hyper(rng, &s.mu);
        s.delta_mu = d;
        s.mu0 = h;
        let (d, h) = self.fam.eps.draw_indicator_and_hyper(rng, &s.log_s2_eps);
        s.delta_eps = d;
        s.tau_eps = h;
        let (d, h) = self.fam.alpha.draw_indicator_and_hyper(rng, &s.log_s2_alpha);
        s.delta_alpha = d;
        s.tau_alpha = h;
    }

    /// One full sweep over all parameter blocks.
    pub fn sweep(&mut self, s: &mut ModelState, rng: &mut StreamRng) -> Result<()> {
        self.sweep_inner(s, rng, false)
    }

    fn sweep_inner(&mut self, s: &mut ModelState, rng: &mut StreamRng, record: bool) -> Result<()> {
        self.marginal_effect_covariance(s, rng);
        self.draw_effects(s, rng);
        self.draw_means(s, rng)?;
        self.update_variances(s, rng, record)?;
        self.update_correlations(s, rng);
        self.update_indicators(s, rng);
        if !s.all_finite() {
            return Err(Error::NonFiniteLogPosterior {
                block: "sweep".into(),
                state: s.dump(),
            });
        }
        Ok(())
    }

    /// Burn-in sweep with proposal tuning at iteration `iter` of `burnin`.
    fn burnin_sweep(&mut self, s: &mut ModelState, rng: &mut StreamRng, iter: usize, burnin: usize) -> Result<()> {
        if !self.adapt {
            return self.sweep(s, rng);
        }
        let record = iter >= burnin / 4 && iter < 3 * burnin / 4;
        self.sweep_inner(s, rng, record)?;
        if iter + 1 == burnin / 2 || iter + 1 == 3 * burnin / 4 {
            for b in &mut self.blocks {
                b.use_history();
                b.window = (0, 0);
            }
        } else if (iter + 1).is_multiple_of(ADAPT_WINDOW) {
            for b in &mut self.blocks {
                tune(&mut b.scale, &mut b.window);
            }
            for r in self.rho.iter_mut().chain(&mut self.levels) {
                r.tune();
            }
        }
        Ok(())
    }

    /// Run `sweeps` adaptive burn-in sweeps from `s`, then freeze the proposals.
    pub fn tune(&mut self, s: &mut ModelState, rng: &mut StreamRng, sweeps: usize) -> Result<()> {
        let adapt = std::mem::replace(&mut self.adapt, true);
        for iter in 0..sweeps {
            self.burnin_sweep(s, rng, iter, sweeps)?;
        }
        self.adapt = adapt;
        self.reset_counters();
        Ok(())
    }

    fn reset_counters(&mut self) {
        for b in &mut self.blocks {
            b.total = (0, 0);
            b.window = (0, 0);
        }
        for r in self.rho.iter_mut().chain(&mut self.levels) {
            r.reset();
        }
        self.local = [(0, 0); 2];
        self.marginal = (0, 0);
    }

    fn diagnostics(&self) -> ChainDiagnostics {
        ChainDiagnostics {
            log_var_acceptance: [
                self.blocks[0].rate(),
                self.blocks[1].rate(),
                self.blocks[2].rate(),
                self.blocks[3].rate(),
            ],
            rho_acceptance: [self.rho[0].rate(), self.rho[1].rate()],
            level_acceptance: [self.levels[0].rate(), self.levels[1].rate()],
            local_acceptance: self.local.map(rate_of),
            marginal_acceptance: rate_of(self.marginal),
            indicator_upper_fraction: [0.0; 3],
        }
    }
}

struct ChainOutput {
    theta: Vec<f64>,
    log_lambda: Vec<f64>,
    log_psi: Vec<f64>,
    diagnostics: ChainDiagnostics,
}

fn run_chain(data: &GroupedPairedSample, prior: &PriorSpec, cfg: &MwgConfig, chain: usize) -> Result<ChainOutput> {
    let mut sampler = MwgSampler::new(data, prior, cfg)?;
    let mut rng = substream(cfg.seed, chain as u64);
    let mut state = sampler.initial_state(&mut rng);
    for iter in 0..cfg.burnin {
        sampler.burnin_sweep(&mut state, &mut rng, iter, cfg.burnin)?;
    }
    sampler.reset_counters();
    let keep = cfg.retained_per_chain();
    let t = data.grid.len();
    let mut out = ChainOutput {
        theta: Vec::with_capacity(keep * t),
        log_lambda: Vec::with_capacity(keep * t),
        log_psi: Vec::with_capacity(keep * t),
        diagnostics: sampler.diagnostics(),
    };
    let mut upper = [0usize; 3];
    for iter in cfg.burnin..cfg.iters {
        sampler.sweep(&mut state, &mut rng)?;
        if (iter - cfg.burnin + 1).is_multiple_of(cfg.thin) && out.theta.len() < keep * t {
            out.theta.extend(state.theta());
            out.log_lambda.extend(state.log_lambda());
            out.log_psi.extend(state.log_psi());
            for (u, d) in upper
                .iter_mut()
                .zip([state.delta_mu, state.delta_eps, state.delta_alpha])
            {
                *u += d.is_upper() as usize;
            }
        }
    }
    out.diagnostics = sampler.diagnostics();
    out.diagnostics.indicator_upper_fraction = upper.map(|u| u as f64 / keep as f64);
    Ok(out)
}

/// Run `cfg.chains` independent chains (in parallel) and pool the thinned,
/// post-burn-in draws of `μ₁ − μ₂`, `σ²_ε,1/σ²_ε,2` and `σ²_α,1/σ²_α,2`.
pub fn run_mwg(data: &GroupedPairedSample, prior: &PriorSpec, cfg: &MwgConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(data, prior, cfg, c))
        .collect::<Result<_>>()?;
    let t = data.grid.len();
    let keep = cfg.retained_per_chain();
    let m = keep * cfg.chains;
    let mut theta = Vec::with_capacity(m * t);
    let mut log_lambda = Vec::with_capacity(m * t);
    let mut log_psi = Vec::with_capacity(m * t);
    let mut chain = Vec::with_capacity(m);
    for (c, o) in outputs.iter().enumerate() {
        theta.extend_from_slice(&o.theta);
        log_lambda.extend_from_slice(&o.log_lambda);
        log_psi.extend_from_slice(&o.log_psi);
        chain.extend(std::iter::repeat_n(c, keep));
    }
    let per_chain = |flat: &[f64]| -> Vec<Vec<Vec<f64>>> {
        // [coordinate][chain][draw]
        (0..t)
            .map(|p| {
                (0..cfg.chains)
                    .map(|c| (0..keep).map(|k| flat[(c * keep + k) * t + p]).collect())
                    .collect()
            })
            .collect()
    };
    let rhat = |flat: &[f64]| -> Vec<f64> { per_chain(flat).iter().map(|ch| split_rhat(ch)).collect() };
    let rhat_theta = rhat(&theta);
    let rhat_log_lambda = rhat(&log_lambda);
    let rhat_log_psi = rhat(&log_psi);
    let max_rhat = rhat_theta
        .iter()
        .chain(&rhat_log_lambda)
        .chain(&rhat_log_psi)
        .fold(1.0f64, |a, &b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    if max_rhat > RHAT_WARNING {
        log::warn!("maximum split R-hat {max_rhat:.3} exceeds {RHAT_WARNING}");
    }
    let exp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(f64::exp).collect() };
    Ok(PosteriorDraws {
        grid: data.grid.clone(),
        theta: CurveMatrix::from_flat(m, t, theta)?,
        lambda: CurveMatrix::from_flat(m, t, exp(log_lambda))?,
        psi: CurveMatrix::from_flat(m, t, exp(log_psi))?,
        chain,
        diagnostics: SamplerDiagnostics {
            chains: outputs.into_iter().map(|o| o.diagnostics).collect(),
            rhat_theta,
            rhat_log_lambda,
            rhat_log_psi,
            max_rhat,
            rhat_warning: max_rhat > RHAT_WARNING,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_wishart_mean() {
        // E[Σ] = S / (ν − 3) for a 2 × 2 inverse Wishart.
        let s = [2.0, 0.6, 1.0];
        let dof = 12.0;
        let mut rng = substream(3, 0);
        let m = 200_000;
        let mut acc = [0.0; 3];
        for _ in 0..m {
            let w = inverse_wishart_2x2(&mut rng, dof, s).unwrap();
            for k in 0..3 {
                acc[k] += w[k] / m as f64;
            }
        }
        for k in 0..3 {
            assert_relative_eq!(acc[k], s[k] / (dof - 3.0), max_relative = 0.01);
        }
    }

    #[test]
    fn gauss2_matches_dense_density() {
        let c = [[1.5, -0.4], [-0.4, 0.7]];
        let e = [0.3, -1.2];
        let cov = DMatrix::from_row_slice(2, 2, &[c[0][0], c[0][1], c[1][0], c[1][1]]);
        let chol = Cholesky::new(cov).unwrap();
        let v = DVector::from_row_slice(&e);
        let quad = v.dot(&chol.solve(&v));
        let logdet = 2.0 * chol.l().diagonal().iter().map(|x: &f64| x.ln()).sum::<f64>();
        assert_relative_eq!(gauss2(c, e), -0.5 * (logdet + quad), max_relative = 1e-12);
    }
}
