//! Prior specification, model state, and forward simulation from the
//! hierarchical Gaussian-process model.
//!
//! Per grid point, random-effect pairs `α_i(t) ~ N(μ(t), Σ_α(t))` and
//! responses `y_ik(t) ~ N(α_i(t), Σ_ε(t))`, where each `Σ(t)` is the 2×2
//! block built from the two channel variances and a cross-channel
//! correlation `ρ(t)`; distinct grid points are conditionally independent.
//! Curves of means and log-variances carry Matérn GP priors whose channel-2
//! mean is shifted by a band-valued mixture indicator `δ`.

use super::calibrate::working_limits;
use super::kernel::{GpPrior, MaternKernel};
use crate::error::{Error, Result};
use crate::fdata::{
    make_cosine_bands, BandKind, BandPair, CurveMatrix, Grid, GroupedPairedSample, PairedFunctionalSample,
};
use crate::rng::StreamRng;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// GP prior on one pair of curves: range, scale, and the bands whose
/// (working-scale) limits are the two mixture offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePrior {
    pub range: f64,
    pub scale: f64,
    pub bands: BandPair,
}

/// Prior on the hyper-mean curves `τ_ε`, `τ_α`, `μ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HyperPrior {
    #[default]
    Flat,
    /// Independent `N(mean, var)` at every grid point.
    Normal { mean: f64, var: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: CurvePrior,
    pub error_variance: CurvePrior,
    pub effect_variance: CurvePrior,
    /// Posterior probability threshold for declaring equivalence.
    pub gamma: f64,
    #[serde(default)]
    pub hyper: HyperPrior,
}

impl PriorSpec {
    /// Cosine bands with `s²_μ = 0.1, a_μ = 0.3` and `s² = 5, a = 0.1` for
    /// both variance families; `γ = 0.95`.
    pub fn default_for(grid: &Grid) -> Self {
        let ratio = make_cosine_bands(grid, BandKind::Multiplicative);
        Self {
            mean: CurvePrior {
                range: 0.3,
                scale: 0.1,
                bands: make_cosine_bands(grid, BandKind::Additive),
            },
            error_variance: CurvePrior {
                range: 0.1,
                scale: 5.0,
                bands: ratio.clone(),
            },
            effect_variance: CurvePrior {
                range: 0.1,
                scale: 5.0,
                bands: ratio,
            },
            gamma: 0.95,
            hyper: HyperPrior::Flat,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.mean.bands.grid
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        for (name, p, kind) in [
            ("mean", &self.mean, BandKind::Additive),
            ("error variance", &self.error_variance, BandKind::Multiplicative),
            ("effect variance", &self.effect_variance, BandKind::Multiplicative),
        ] {
            MaternKernel::new(p.range, p.scale)?;
            if p.bands.kind != kind {
                return Err(Error::BandKindMismatch {
                    metric: format!("{name} prior"),
                    expected: kind.name(),
                });
            }
            if p.bands.grid != *self.grid() {
                return Err(Error::InvalidGrid(format!("{name} prior bands use a different grid")));
            }
        }
        if let HyperPrior::Normal { var, mean } = self.hyper {
            if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
                return Err(Error::InvalidConfig("hyper-prior variance must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSide {
    Lower,
    Upper,
}

impl BandSide {
    pub fn is_upper(self) -> bool {
        self == BandSide::Upper
    }
}

/// Complete parameter state of the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub mu: [Vec<f64>; 2],
    pub alpha: Vec<[Vec<f64>; 2]>,
    pub log_s2_eps: [Vec<f64>; 2],
    pub log_s2_alpha: [Vec<f64>; 2],
    pub rho_eps: Vec<f64>,
    pub rho_alpha: Vec<f64>,
    pub delta_mu: BandSide,
    pub delta_eps: BandSide,
    pub delta_alpha: BandSide,
    pub tau_eps: Vec<f64>,
    pub tau_alpha: Vec<f64>,
    pub mu0: Vec<f64>,
}

impl ModelState {
    pub fn grid_len(&self) -> usize {
        self.rho_eps.len()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.mu[0].iter().zip(&self.mu[1]).map(|(a, b)| a - b).collect()
    }

    pub fn log_lambda(&self) -> Vec<f64> {
        self.log_s2_eps[0]
            .iter()
            .zip(&self.log_s2_eps[1])
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn log_psi(&self) -> Vec<f64> {
        self.log_s2_alpha[0]
            .iter()
            .zip(&self.log_s2_alpha[1])
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        let curves = self
            .mu
            .iter()
            .chain(&self.log_s2_eps)
            .chain(&self.log_s2_alpha)
            .chain(self.alpha.iter().flatten())
            .chain([
                &self.rho_eps,
                &self.rho_alpha,
                &self.tau_eps,
                &self.tau_alpha,
                &self.mu0,
            ]);
        curves.flatten().all(|x| x.is_finite())
    }

    pub fn dump(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|e| format!("<unserializable state: {e}>"))
    }
}

/// 2×2 covariance `[[v1, ρ√(v1v2)], [ρ√(v1v2), v2]]`.
pub fn pair_cov(v1: f64, v2: f64, rho: f64) -> [[f64; 2]; 2] {
    let c = rho * (v1 * v2).sqrt();
    [[v1, c], [c, v2]]
}

pub fn inv2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

/// Draw from `N(mean, cov)` in two dimensions.
pub fn draw_pair(rng: &mut StreamRng, mean: [f64; 2], cov: [[f64; 2]; 2]) -> [f64; 2] {
    let l11 = cov[0][0].sqrt();
    let l21 = if l11 > 0.0 { cov[1][0] / l11 } else { 0.0 };
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    [mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2]
}

pub fn normals(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// One of the three curve-pair families `x₁ ~ GP(h, C)`, `x₂ ~ GP(h − δ, C)`
/// with `δ` equal to the lower or upper working-scale band limit.
#[derive(Debug, Clone)]
pub struct PairFamily {
    pub gp: GpPrior,
    pub offsets: [Vec<f64>; 2],
    hyper: HyperPrior,
    /// `(4V + 2C)` factor for the proper hyper-prior.
    sum_chol: Option<Cholesky<f64, Dyn>>,
    /// Posterior precision `2Q + V⁻¹` factor for the proper hyper-prior.
    post_chol: Option<Cholesky<f64, Dyn>>,
    /// Covariance of one curve given the other and `δ`, with `h` integrated out.
    pub cross: GpPrior,
    /// `x₁ − x₂ ~ GP(δ, 2C)` whatever the hyper-prior.
    pub diff: GpPrior,
    /// Regression of one curve on the other under the proper hyper-prior;
    /// the identity (`None`) under the flat one.
    cross_gain: Option<DMatrix<f64>>,
    /// Precision of `x₁ + x₂` given `δ` under the proper hyper-prior; the sum
    /// is flat under the flat one.
    pub sum_precision: Option<DMatrix<f64>>,
}

impl PairFamily {
    pub fn new(prior: &CurvePrior, hyper: HyperPrior) -> Result<Self> {
        let kernel = MaternKernel::new(prior.range, prior.scale)?;
        let grid = &prior.bands.grid;
        let gp = GpPrior::from_kernel(&kernel, grid)?;
        let (lo, hi) = working_limits(&prior.bands);
        let c = kernel.covariance(grid);
        let t = c.nrows();
        let (cross, cross_gain) = match hyper {
            HyperPrior::Flat => (GpPrior::new(&c * 2.0)?, None),
            HyperPrior::Normal { var, .. } => {
                let shifted = Cholesky::new(&c + DMatrix::identity(t, t) * var)
                    .ok_or_else(|| Error::NotPositiveDefinite("hyper-mean marginal".into()))?;
                let inv = shifted.inverse();
                let cov = &c + DMatrix::identity(t, t) * var - &inv * (var * var);
                (GpPrior::new((&cov + cov.transpose()) * 0.5)?, Some(inv * var))
            }
        };
        let (sum_chol, post_chol) = match hyper {
            HyperPrior::Flat => (None, None),
            HyperPrior::Normal { var, .. } => {
                let sum = &c * 2.0 + DMatrix::identity(t, t) * (4.0 * var);
                let post = gp.precision() * 2.0 + DMatrix::identity(t, t) / var;
                let err = || Error::NotPositiveDefinite("hyper-mean conditional".into());
                (
                    Some(Cholesky::new(sum).ok_or_else(err)?),
                    Some(Cholesky::new(post).ok_or_else(err)?),
                )
            }
        };
        Ok(Self {
            gp,
            offsets: [lo, hi],
            hyper,
            cross,
            diff: GpPrior::new(&c * 2.0)?,
            cross_gain,
            sum_precision: sum_chol.as_ref().map(|c| c.inverse()),
            sum_chol,
            post_chol,
        })
    }

    /// Prior mean of `x₁ + x₂` given `δ` under the proper hyper-prior.
    pub fn sum_mean(&self, side: BandSide) -> Option<Vec<f64>> {
        match self.hyper {
            HyperPrior::Normal { mean, .. } => Some(self.offset(side).iter().map(|d| 2.0 * mean - d).collect()),
            HyperPrior::Flat => None,
        }
    }

    /// Mean of curve `j` given the other curve and `δ`, with `h` integrated
    /// out; its covariance is [`PairFamily::cross`].
    pub fn cross_mean(&self, j: usize, other: &[f64], side: BandSide) -> Vec<f64> {
        let off = self.offset(side);
        let sign = if j == 0 { 1.0 } else { -1.0 };
        match (&self.cross_gain, self.hyper) {
            (Some(gain), HyperPrior::Normal { mean, .. }) => {
                // E[x_j] = m − [j = 1]δ; E[x_k] = m − [k = 1]δ.
                let centered: Vec<f64> = (0..other.len())
                    .map(|p| other[p] - mean + if j == 0 { off[p] } else { 0.0 })
                    .collect();
                let adj = gain * DVector::from_vec(centered);
                (0..other.len())
                    .map(|p| mean - if j == 1 { off[p] } else { 0.0 } + adj[p])
                    .collect()
            }
            _ => other.iter().zip(off).map(|(x, d)| x + sign * d).collect(),
        }
    }

    pub fn offset(&self, side: BandSide) -> &[f64] {
        &self.offsets[side.is_upper() as usize]
    }

    /// Prior means of the two curves.
    pub fn means(&self, h: &[f64], side: BandSide) -> [Vec<f64>; 2] {
        let d = self.offset(side);
        [h.to_vec(), h.iter().zip(d).map(|(a, b)| a - b).collect()]
    }

    pub fn logprior(&self, x: &[Vec<f64>; 2], h: &[f64], side: BandSide) -> f64 {
        let m = self.means(h, side);
        self.gp.logdensity(&x[0], &m[0]) + self.gp.logdensity(&x[1], &m[1])
    }

    /// Exact joint draw of `(δ, h)` given the pair, with `h` integrated out
    /// for the indicator.
    pub fn draw_indicator_and_hyper(&self, rng: &mut StreamRng, x: &[Vec<f64>; 2]) -> (BandSide, Vec<f64>) {
        let t = x[0].len();
        let d: Vec<f64> = x[0].iter().zip(&x[1]).map(|(a, b)| a - b).collect();
        let s: Vec<f64> = x[0].iter().zip(&x[1]).map(|(a, b)| a + b).collect();
        let score = |side: BandSide| -> f64 {
            let off = self.offset(side);
            let r: Vec<f64> = d.iter().zip(off).map(|(a, b)| a - b).collect();
            let mut v = -0.25 * self.gp.quad_form(&r);
            if let (HyperPrior::Normal { mean, .. }, Some(chol)) = (self.hyper, &self.sum_chol) {
                let u = DVector::from_iterator(t, s.iter().zip(off).map(|(a, b)| a - 2.0 * mean + b));
                v -= 0.5 * u.dot(&chol.solve(&u));
            }
            v
        };
        let (lo, hi) = (score(BandSide::Lower), score(BandSide::Upper));
        let p_upper = 1.0 / (1.0 + (lo - hi).exp());
        let side = if rng.random::<f64>() < p_upper {
            BandSide::Upper
        } else {
            BandSide::Lower
        };

        let off = self.offset(side);
        let z = normals(rng, t);
        let h = match (self.hyper, &self.post_chol) {
            (HyperPrior::Normal { mean, var }, Some(post)) => {
                let shifted: Vec<f64> = x[1].iter().zip(off).map(|(a, b)| a + b).collect();
                let q = self.gp.precision();
                let b = q * (DVector::from_column_slice(&x[0]) + DVector::from_column_slice(&shifted))
                    + DVector::from_element(t, mean / var);
                let m = post.solve(&b);
                let noise = post
                    .l()
                    .transpose()
                    .solve_upper_triangular(&DVector::from_column_slice(&z))
                    .expect("triangular factor");
                (m + noise).iter().copied().collect()
            }
            _ => {
                let center: Vec<f64> = (0..t).map(|i| 0.5 * (s[i] + off[i])).collect();
                let scaled: Vec<f64> = z.iter().map(|v| v * std::f64::consts::FRAC_1_SQRT_2).collect();
                self.gp.sample_with(&center, &scaled)
            }
        };
        (side, h)
    }

    fn draw_hyper_prior(&self, rng: &mut StreamRng, t: usize) -> Result<Vec<f64>> {
        match self.hyper {
            HyperPrior::Flat => Err(Error::InvalidConfig(
                "prior draws need a proper hyper-prior on the mean curves".into(),
            )),
            HyperPrior::Normal { mean, var } => Ok(normals(rng, t).iter().map(|z| mean + var.sqrt() * z).collect()),
        }
    }

    fn draw_pair_prior(&self, rng: &mut StreamRng, h: &[f64], side: BandSide) -> [Vec<f64>; 2] {
        let t = h.len();
        let m = self.means(h, side);
        [
            self.gp.sample_with(&m[0], &normals(rng, t)),
            self.gp.sample_with(&m[1], &normals(rng, t)),
        ]
    }
}

/// The three curve-pair families built from a prior specification.
#[derive(Debug, Clone)]
pub struct Families {
    pub mean: PairFamily,
    pub eps: PairFamily,
    pub alpha: PairFamily,
}

impl Families {
    pub fn new(prior: &PriorSpec) -> Result<Self> {
        prior.validate()?;
        Ok(Self {
            mean: PairFamily::new(&prior.mean, prior.hyper)?,
            eps: PairFamily::new(&prior.error_variance, prior.hyper)?,
            alpha: PairFamily::new(&prior.effect_variance, prior.hyper)?,
        })
    }
}

fn fair_side(rng: &mut StreamRng) -> BandSide {
    if rng.random::<bool>() {
        BandSide::Upper
    } else {
        BandSide::Lower
    }
}

/// Draw every parameter from the prior; needs a proper hyper-prior.
pub fn sample_prior_state(prior: &PriorSpec, groups: usize, rng: &mut StreamRng) -> Result<ModelState> {
    let fam = Families::new(prior)?;
    let t = prior.grid().len();
    let mu0 = fam.mean.draw_hyper_prior(rng, t)?;
    let tau_eps = fam.eps.draw_hyper_prior(rng, t)?;
    let tau_alpha = fam.alpha.draw_hyper_prior(rng, t)?;
    let delta_mu = fair_side(rng);
    let delta_eps = fair_side(rng);
    let delta_alpha = fair_side(rng);
    let mu = fam.mean.draw_pair_prior(rng, &mu0, delta_mu);
    let log_s2_eps = fam.eps.draw_pair_prior(rng, &tau_eps, delta_eps);
    let log_s2_alpha = fam.alpha.draw_pair_prior(rng, &tau_alpha, delta_alpha);
    let rho_eps: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rho_alpha: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut state = ModelState {
        mu,
        alpha: Vec::new(),
        log_s2_eps,
        log_s2_alpha,
        rho_eps,
        rho_alpha,
        delta_mu,
        delta_eps,
        delta_alpha,
        tau_eps,
        tau_alpha,
        mu0,
    };
    state.alpha = draw_effects(&state, groups, rng);
    Ok(state)
}

/// Random-effect pairs `α_i(t) ~ N(μ(t), Σ_α(t))`.
pub fn draw_effects(state: &ModelState, groups: usize, rng: &mut StreamRng) -> Vec<[Vec<f64>; 2]> {
    let t = state.grid_len();
    (0..groups)
        .map(|_| {
            let mut a = [vec![0.0; t], vec![0.0; t]];
            for p in 0..t {
                let cov = pair_cov(
                    state.log_s2_alpha[0][p].exp(),
                    state.log_s2_alpha[1][p].exp(),
                    state.rho_alpha[p],
                );
                let v = draw_pair(rng, [state.mu[0][p], state.mu[1][p]], cov);
                a[0][p] = v[0];
                a[1][p] = v[1];
            }
            a
        })
        .collect()
}

/// Responses `y_ik(t) ~ N(α_i(t), Σ_ε(t))` for the given group sizes.
pub fn simulate_data_given_state(
    state: &ModelState,
    grid: &Grid,
    group_sizes: &[usize],
    rng: &mut StreamRng,
) -> Result<GroupedPairedSample> {
    let t = grid.len();
    if state.alpha.len() != group_sizes.len() {
        return Err(Error::ShapeMismatch {
            what: "random effects vs group sizes".into(),
            expected: group_sizes.len(),
            found: state.alpha.len(),
        });
    }
    let covs: Vec<[[f64; 2]; 2]> = (0..t)
        .map(|p| {
            pair_cov(
                state.log_s2_eps[0][p].exp(),
                state.log_s2_eps[1][p].exp(),
                state.rho_eps[p],
            )
        })
        .collect();
    let mut groups = Vec::with_capacity(group_sizes.len());
    for (alpha, &n) in state.alpha.iter().zip(group_sizes) {
        let mut c1 = Vec::with_capacity(n * t);
        let mut c2 = Vec::with_capacity(n * t);
        for _ in 0..n {
            for p in 0..t {
                let v = draw_pair(rng, [alpha[0][p], alpha[1][p]], covs[p]);
                c1.push(v[0]);
                c2.push(v[1]);
            }
        }
        groups.push(PairedFunctionalSample::new(
            grid.clone(),
            CurveMatrix::from_flat(n, t, c1)?,
            CurveMatrix::from_flat(n, t, c2)?,
        )?);
    }
    GroupedPairedSample::new(grid.clone(), groups)
}

/// Per-group sufficient statistics of the responses.
#[derive(Debug, Clone)]
pub struct DataSummary {
    pub sizes: Vec<usize>,
    /// Group means `ȳ_i` per channel.
    pub means: Vec<[Vec<f64>; 2]>,
    /// Within-group centred cross products `[Σe₁², Σe₁e₂, Σe₂²]` per grid point.
    pub within: Vec<Vec<[f64; 3]>>,
}

impl DataSummary {
    pub fn new(g: &GroupedPairedSample) -> Self {
        let t = g.grid.len();
        let mut means = Vec::with_capacity(g.num_groups());
        let mut within = Vec::with_capacity(g.num_groups());
        for grp in &g.groups {
            let m = [grp.curves_1.column_means(), grp.curves_2.column_means()];
            let mut w = vec![[0.0; 3]; t];
            for k in 0..grp.len() {
                let (r1, r2) = (grp.curves_1.row(k), grp.curves_2.row(k));
                for p in 0..t {
                    let (e1, e2) = (r1[p] - m[0][p], r2[p] - m[1][p]);
                    w[p][0] += e1 * e1;
                    w[p][1] += e1 * e2;
                    w[p][2] += e2 * e2;
                }
            }
            means.push(m);
            within.push(w);
        }
        Self {
            sizes: g.group_sizes(),
            means,
            within,
        }
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// `Σ_i Σ_k (y − α_i)(y − α_i)ᵀ` at every grid point.
    pub fn residual_stats(&self, alpha: &[[Vec<f64>; 2]]) -> Vec<[f64; 3]> {
        let t = self.means[0][0].len();
        let mut s = vec![[0.0; 3]; t];
        for (i, a) in alpha.iter().enumerate() {
            let n = self.sizes[i] as f64;
            for p in 0..t {
                let d1 = self.means[i][0][p] - a[0][p];
                let d2 = self.means[i][1][p] - a[1][p];
                let w = self.within[i][p];
                s[p][0] += w[0] + n * d1 * d1;
                s[p][1] += w[1] + n * d1 * d2;
                s[p][2] += w[2] + n * d2 * d2;
            }
        }
        s
    }
}

/// `Σ_i (α_i − μ)(α_i − μ)ᵀ` at every grid point.
pub fn effect_stats(alpha: &[[Vec<f64>; 2]], mu: &[Vec<f64>; 2]) -> Vec<[f64; 3]> {
    let t = mu[0].len();
    let mut s = vec![[0.0; 3]; t];
    for a in alpha {
        for p in 0..t {
            let d1 = a[0][p] - mu[0][p];
            let d2 = a[1][p] - mu[1][p];
            s[p][0] += d1 * d1;
            s[p][1] += d1 * d2;
            s[p][2] += d2 * d2;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::kernel::pair_block_logdensity;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn small_prior(t: usize) -> PriorSpec {
        let mut p = PriorSpec::default_for(&Grid::equispaced(t));
        p.hyper = HyperPrior::Normal { mean: 0.0, var: 1.0 };
        p
    }

    #[test]
    fn default_prior_is_valid() {
        assert!(PriorSpec::default_for(&Grid::equispaced(25)).validate().is_ok());
        let mut p = small_prior(3);
        p.gamma = 1.0;
        assert!(p.validate().is_err());
        let mut p = small_prior(3);
        p.mean.bands = make_cosine_bands(&Grid::equispaced(3), BandKind::Multiplicative);
        assert!(matches!(p.validate(), Err(Error::BandKindMismatch { .. })));
    }

    #[test]
    fn residual_stats_match_direct_sum() {
        let prior = small_prior(3);
        let mut rng = substream(1, 0);
        let state = sample_prior_state(&prior, 3, &mut rng).unwrap();
        let g = simulate_data_given_state(&state, prior.grid(), &[2, 3, 4], &mut rng).unwrap();
        let summary = DataSummary::new(&g);
        let s = summary.residual_stats(&state.alpha);
        for p in 0..3 {
            let mut direct = [0.0; 3];
            for (i, grp) in g.groups.iter().enumerate() {
                for k in 0..grp.len() {
                    let e1 = grp.curves_1.get(k, p) - state.alpha[i][0][p];
                    let e2 = grp.curves_2.get(k, p) - state.alpha[i][1][p];
                    direct[0] += e1 * e1;
                    direct[1] += e1 * e2;
                    direct[2] += e2 * e2;
                }
            }
            for c in 0..3 {
                assert_relative_eq!(s[p][c], direct[c], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn full_likelihood_blocks_match_dense() {
        // T = 3, A = 2, n_i = 2: block sum vs one dense 2T-dimensional density per pair.
        let prior = small_prior(3);
        let mut rng = substream(2, 0);
        let state = sample_prior_state(&prior, 2, &mut rng).unwrap();
        let g = simulate_data_given_state(&state, prior.grid(), &[2, 2], &mut rng).unwrap();
        let v1: Vec<f64> = state.log_s2_eps[0].iter().map(|x| x.exp()).collect();
        let v2: Vec<f64> = state.log_s2_eps[1].iter().map(|x| x.exp()).collect();
        let corr = crate::bayes::kernel::SimplifiedCorr::new(state.rho_eps.clone()).unwrap();
        let dense = corr.dense_covariance(&v1, &v2);
        let dense_prior = GpPrior::new(dense).unwrap();
        let (mut blocks, mut full) = (0.0, 0.0);
        for (i, grp) in g.groups.iter().enumerate() {
            for k in 0..grp.len() {
                let x: Vec<f64> = grp.curves_1.row(k).iter().chain(grp.curves_2.row(k)).copied().collect();
                let m: Vec<f64> = state.alpha[i][0].iter().chain(&state.alpha[i][1]).copied().collect();
                full += dense_prior.logdensity(&x, &m);
                for p in 0..3 {
                    blocks +=
                        pair_block_logdensity([x[p] - m[p], x[3 + p] - m[3 + p]], [v1[p], v2[p]], state.rho_eps[p]);
                }
            }
        }
        assert_relative_eq!(blocks, full, epsilon = 1e-8);
    }

    #[test]
    fn zero_variance_truth_reproduces_effects() {
        let prior = small_prior(2);
        let mut rng = substream(3, 0);
        let mut state = sample_prior_state(&prior, 2, &mut rng).unwrap();
        state.log_s2_eps = [vec![-800.0; 2], vec![-800.0; 2]];
        let g = simulate_data_given_state(&state, prior.grid(), &[3, 3], &mut rng).unwrap();
        for (i, grp) in g.groups.iter().enumerate() {
            assert!(grp.curves_1.rows().all(|r| r == state.alpha[i][0].as_slice()));
        }
    }

    #[test]
    fn flat_hyper_prior_has_no_prior_draws() {
        let prior = PriorSpec::default_for(&Grid::equispaced(3));
        assert!(sample_prior_state(&prior, 2, &mut substream(4, 0)).is_err());
    }
}
