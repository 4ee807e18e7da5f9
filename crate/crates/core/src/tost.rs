//! Bootstrap Two One-Sided Test for functional metrics.
//!
//! Pointwise one-sided confidence limits come from the basic (bias-correcting
//! percentile) bootstrap; ratio metrics are handled on the log scale. The
//! functional null is rejected only when every pointwise one-sided test
//! rejects, which is an intersection-union test of size at most `alpha`.

use crate::error::{Error, Result};
use crate::estimators::{
    adjusted_random_effects, anova_decompose, decompose_flat, estimate_metrics_independent, estimate_metrics_paired,
    AnovaFormula, MetricEstimates, S2_ALPHA_FLOOR,
};
use crate::fdata::{
    make_cosine_bands, BandKind, BandPair, CurveMatrix, FunctionalSample, Grid, GroupedPairedSample,
    PairedFunctionalSample,
};
use crate::rng::{substream, StreamRng};
use crate::stats::{quantile_sorted, upper_quantile_sorted};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Redraws allowed per replicate index before a degenerate replicate is an error.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    IndependentIid,
    MatchedPairs,
    RandomEffectsMatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Theta,
    Lambda,
    Psi,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Theta => "theta",
            Metric::Lambda => "lambda",
            Metric::Psi => "psi",
        }
    }

    pub fn band_kind(self) -> BandKind {
        match self {
            Metric::Theta => BandKind::Additive,
            Metric::Lambda | Metric::Psi => BandKind::Multiplicative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Pointwise level of each one-sided test.
    pub alpha: f64,
    pub seed: u64,
    pub design: Design,
    #[serde(default)]
    pub anova_formula: AnovaFormula,
    /// Resample only the location metric; variance degeneracy is then ignored.
    #[serde(default)]
    pub location_only: bool,
}

impl BootstrapConfig {
    pub fn new(design: Design, replicates: usize, alpha: f64, seed: u64) -> Self {
        Self {
            replicates,
            alpha,
            seed,
            design,
            anova_formula: AnovaFormula::Printed,
            location_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::InvalidConfig(format!(
                "at least 100 bootstrap replicates required, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Pointwise level that keeps overall size `alpha` when the `grid_len`
/// pointwise statistics are independent (`alpha^(1/T)`). Only a manual
/// override; the default pointwise level is `alpha` itself.
pub fn independent_pointwise_alpha(alpha: f64, grid_len: usize) -> f64 {
    alpha.powf(1.0 / grid_len as f64)
}

/// Bootstrap replicates of the metric estimators, one row per replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateDraws {
    pub theta: CurveMatrix,
    pub lambda: Option<CurveMatrix>,
    pub psi: Option<CurveMatrix>,
}

impl ReplicateDraws {
    pub fn replicates(&self) -> usize {
        self.theta.nrows()
    }

    pub fn metric(&self, m: Metric) -> Option<&CurveMatrix> {
        match m {
            Metric::Theta => Some(&self.theta),
            Metric::Lambda => self.lambda.as_ref(),
            Metric::Psi => self.psi.as_ref(),
        }
    }
}

struct Replicate {
    theta: Vec<f64>,
    lambda: Option<Vec<f64>>,
    psi: Option<Vec<f64>>,
}

fn run_replicates<F>(cfg: &BootstrapConfig, t: usize, draw: F) -> Result<ReplicateDraws>
where
    F: Fn(&mut StreamRng) -> Option<Replicate> + Sync,
{
    cfg.validate()?;
    let reps: Vec<Replicate> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, r as u64);
            for _ in 0..=MAX_REDRAWS {
                if let Some(rep) = draw(&mut rng) {
                    return Ok(rep);
                }
            }
            Err(Error::DegenerateReplicate {
                replicate: r,
                redraws: MAX_REDRAWS,
            })
        })
        .collect::<Result<_>>()?;

    let b = reps.len();
    let collect = |f: &dyn Fn(&Replicate) -> Option<&Vec<f64>>| -> Option<CurveMatrix> {
        let mut values = Vec::with_capacity(b * t);
        for rep in &reps {
            values.extend_from_slice(f(rep)?);
        }
        Some(CurveMatrix::from_flat(b, t, values).expect("replicate shape"))
    };
    Ok(ReplicateDraws {
        theta: collect(&|r| Some(&r.theta)).expect("theta always present"),
        lambda: collect(&|r| r.lambda.as_ref()),
        psi: collect(&|r| r.psi.as_ref()),
    })
}

/// Mean and unbiased variance of the selected rows.
fn resampled_moments(m: &CurveMatrix, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let t = m.ncols();
    let n = idx.len() as f64;
    let mut mean = vec![0.0; t];
    for &i in idx {
        for (acc, v) in mean.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|x| *x /= n);
    let mut var = vec![0.0; t];
    for &i in idx {
        for ((acc, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
            let d = v - mu;
            *acc += d * d;
        }
    }
    var.iter_mut().for_each(|x| *x /= n - 1.0);
    (mean, var)
}

fn positive_ratio(num: &[f64], den: &[f64]) -> Option<Vec<f64>> {
    num.iter()
        .zip(den)
        .map(|(a, b)| {
            let r = a / b;
            (*a > 0.0 && *b > 0.0 && r.is_finite() && r > 0.0).then_some(r)
        })
        .collect()
}

fn draw_indices(rng: &mut StreamRng, n: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

fn two_sample_replicate(
    c1: &CurveMatrix,
    c2: &CurveMatrix,
    i1: &[usize],
    i2: &[usize],
    location_only: bool,
) -> Option<Replicate> {
    let (m1, v1) = resampled_moments(c1, i1);
    let (m2, v2) = resampled_moments(c2, i2);
    let theta = m1.iter().zip(&m2).map(|(a, b)| a - b).collect();
    let lambda = if location_only {
        None
    } else {
        Some(positive_ratio(&v1, &v2)?)
    };
    Some(Replicate {
        theta,
        lambda,
        psi: None,
    })
}

/// Resample each population independently with replacement.
pub fn bootstrap_independent(
    s1: &FunctionalSample,
    s2: &FunctionalSample,
    cfg: &BootstrapConfig,
) -> Result<ReplicateDraws> {
    if s1.len() < 2 || s2.len() < 2 {
        return Err(Error::InsufficientSample(
            "independent design needs at least 2 curves per group".into(),
        ));
    }
    if s1.grid != s2.grid {
        return Err(Error::InvalidGrid("the two samples use different grids".into()));
    }
    let (n1, n2) = (s1.len(), s2.len());
    run_replicates(cfg, s1.grid.len(), |rng| {
        let i1 = draw_indices(rng, n1, n1);
        let i2 = draw_indices(rng, n2, n2);
        two_sample_replicate(&s1.curves, &s2.curves, &i1, &i2, cfg.location_only)
    })
}

/// Resample matched pairs jointly, preserving within-pair dependence.
pub fn bootstrap_matched(s: &PairedFunctionalSample, cfg: &BootstrapConfig) -> Result<ReplicateDraws> {
    if s.len() < 2 {
        return Err(Error::InsufficientSample(
            "matched design needs at least 2 pairs".into(),
        ));
    }
    let n = s.len();
    run_replicates(cfg, s.grid.len(), |rng| {
        let idx = draw_indices(rng, n, n);
        two_sample_replicate(&s.curves_1, &s.curves_2, &idx, &idx, cfg.location_only)
    })
}

/// Two-stage bootstrap for paired random effects with paired responses.
///
/// Each replicate resamples `A` adjusted random-effect pairs (the `i`-th draw
/// receives group size `n_i`), adds residual pairs drawn from the pooled
/// reservoir of all `N` residuals `y − α̂`, and re-estimates θ, λ and ψ.
pub fn bootstrap_random_effects(g: &GroupedPairedSample, cfg: &BootstrapConfig) -> Result<ReplicateDraws> {
    let sizes = g.group_sizes();
    if sizes.iter().any(|&n| n < 2) {
        return Err(Error::InsufficientSample(
            "random-effects bootstrap needs at least 2 pairs per group".into(),
        ));
    }
    let t = g.grid.len();
    let decomposition = anova_decompose(g, cfg.anova_formula)?;
    let effects = adjusted_random_effects(&decomposition)?;

    // Residual reservoir, row-major N × t per channel.
    let total = g.total();
    let mut reservoir = [Vec::with_capacity(total * t), Vec::with_capacity(total * t)];
    for (i, grp) in g.groups.iter().enumerate() {
        for j in 0..2 {
            let group_mean = &decomposition.mean_by_group[i][j];
            for row in grp.channel(j).rows() {
                reservoir[j].extend(row.iter().zip(group_mean).map(|(y, a)| y - a));
            }
        }
    }

    let a = sizes.len();
    run_replicates(cfg, t, |rng| {
        let mut ystar = [vec![0.0; total * t], vec![0.0; total * t]];
        let mut row = 0;
        for &ni in &sizes {
            let effect = &effects[rng.random_range(0..a)];
            for _ in 0..ni {
                let r = rng.random_range(0..total);
                for j in 0..2 {
                    let dst = &mut ystar[j][row * t..(row + 1) * t];
                    let res = &reservoir[j][r * t..(r + 1) * t];
                    for p in 0..t {
                        dst[p] = effect[j][p] + res[p];
                    }
                }
                row += 1;
            }
        }
        let d = decompose_flat(&sizes, t, [&ystar[0], &ystar[1]], cfg.anova_formula);
        let mut theta = vec![0.0; t];
        for gm in &d.mean_by_group {
            for p in 0..t {
                theta[p] += gm[0][p] - gm[1][p];
            }
        }
        theta.iter_mut().for_each(|x| *x /= a as f64);
        if cfg.location_only {
            return Some(Replicate {
                theta,
                lambda: None,
                psi: None,
            });
        }
        let clipped = |j: usize| d.s2_alpha_raw[j].iter().any(|&v| v <= S2_ALPHA_FLOOR);
        if clipped(0) || clipped(1) {
            return None;
        }
        Some(Replicate {
            theta,
            lambda: Some(positive_ratio(&d.sse[0], &d.sse[1])?),
            psi: Some(positive_ratio(&d.s2_alpha_raw[0], &d.s2_alpha_raw[1])?),
        })
    })
}

/// Finite endpoints of the two pointwise one-sided `1 − α` confidence regions.
///
/// `lower_of_upper_ci` bounds `C^u = [L, ∞)`; `upper_of_lower_ci` bounds
/// `C^l = (−∞, U)` (or `(0, U]` for ratios).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedBands {
    pub metric: Metric,
    pub lower_of_upper_ci: Vec<f64>,
    pub upper_of_lower_ci: Vec<f64>,
}

fn sorted_column(draws: &CurveMatrix, p: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut col: Vec<f64> = (0..draws.nrows()).map(|r| f(draws.get(r, p))).collect();
    col.sort_by(f64::total_cmp);
    col
}

fn check_draws(draws: &CurveMatrix, hat: &[f64], alpha: f64) -> Result<()> {
    if draws.nrows() == 0 {
        return Err(Error::InsufficientSample("no bootstrap draws".into()));
    }
    if draws.ncols() != hat.len() {
        return Err(Error::ShapeMismatch {
            what: "draws vs estimate".into(),
            expected: hat.len(),
            found: draws.ncols(),
        });
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    Ok(())
}

/// Basic bootstrap limits for a location metric:
/// `L = 2θ̂ − q⁺_α[θ̂*]` and `U = 2θ̂ − q_α[θ̂*]`, where `q_α` is the
/// `⌈αB⌉`-th smallest draw and `q⁺_α` the `⌈αB⌉`-th largest.
pub fn theta_bands(draws: &CurveMatrix, theta_hat: &[f64], alpha: f64) -> Result<OneSidedBands> {
    check_draws(draws, theta_hat, alpha)?;
    let (lo, hi) = (0..theta_hat.len())
        .map(|p| {
            let col = sorted_column(draws, p, |x| x);
            let two = 2.0 * theta_hat[p];
            (
                two - upper_quantile_sorted(&col, alpha),
                two - quantile_sorted(&col, alpha),
            )
        })
        .unzip();
    Ok(OneSidedBands {
        metric: Metric::Theta,
        lower_of_upper_ci: lo,
        upper_of_lower_ci: hi,
    })
}

/// Log-scale basic bootstrap limits for a ratio metric:
/// `L = λ̂² · q_α[1/λ̂*]` and `U = λ̂² · q⁺_α[1/λ̂*]`.
pub fn ratio_bands(draws: &CurveMatrix, ratio_hat: &[f64], alpha: f64, metric: Metric) -> Result<OneSidedBands> {
    check_draws(draws, ratio_hat, alpha)?;
    if metric == Metric::Theta {
        return Err(Error::BandKindMismatch {
            metric: metric.name().into(),
            expected: "additive",
        });
    }
    if let Some(p) = ratio_hat.iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::DegenerateVariance {
            what: format!("{} estimate", metric.name()),
            index: p,
        });
    }
    if let Some(pos) = draws.as_slice().iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::DegenerateVariance {
            what: format!("{} draws", metric.name()),
            index: pos % draws.ncols(),
        });
    }
    let (lo, hi) = (0..ratio_hat.len())
        .map(|p| {
            let col = sorted_column(draws, p, |x| 1.0 / x);
            let sq = ratio_hat[p] * ratio_hat[p];
            (
                sq * quantile_sorted(&col, alpha),
                sq * upper_quantile_sorted(&col, alpha),
            )
        })
        .unzip();
    Ok(OneSidedBands {
        metric,
        lower_of_upper_ci: lo,
        upper_of_lower_ci: hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectNonequivalence,
    FailToReject,
}

impl Decision {
    pub fn from_reject(reject: bool) -> Self {
        if reject {
            Decision::RejectNonequivalence
        } else {
            Decision::FailToReject
        }
    }

    pub fn rejects(self) -> bool {
        self == Decision::RejectNonequivalence
    }
}

/// Equivalence bands for each metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceBands {
    pub theta: BandPair,
    pub lambda: BandPair,
    pub psi: BandPair,
}

impl EquivalenceBands {
    /// Cosine bands for θ and the same multiplicative bands for λ and ψ.
    pub fn cosine(grid: &Grid) -> Self {
        let ratio = make_cosine_bands(grid, BandKind::Multiplicative);
        Self {
            theta: make_cosine_bands(grid, BandKind::Additive),
            lambda: ratio.clone(),
            psi: ratio,
        }
    }

    pub fn for_metric(&self, m: Metric) -> &BandPair {
        match m {
            Metric::Theta => &self.theta,
            Metric::Lambda => &self.lambda,
            Metric::Psi => &self.psi,
        }
    }

    /// Bands for the channel-swapped metrics.
    pub fn mirrored(&self) -> Self {
        Self {
            theta: self.theta.mirrored(),
            lambda: self.lambda.mirrored(),
            psi: self.psi.mirrored(),
        }
    }
}

/// Point estimate plus bootstrap limits for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEvidence {
    pub estimate: Vec<f64>,
    pub bands: OneSidedBands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTest {
    pub metric: Metric,
    pub estimate: Vec<f64>,
    pub bands: OneSidedBands,
    pub equivalence: BandPair,
    /// Grid indices where `κ_l(t)` is not strictly below the lower limit of `C^u`.
    pub lower_violations: Vec<usize>,
    /// Grid indices where `κ_u(t)` is not strictly above the upper limit of `C^l`.
    pub upper_violations: Vec<usize>,
    /// Union of both violation sets.
    pub violations: Vec<usize>,
    pub decision: Decision,
    /// Upper side only; reported for the error-variance ratio.
    pub noninferiority: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TostSettings {
    pub design: Design,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TostReport {
    pub grid: Grid,
    pub settings: Option<TostSettings>,
    pub metrics: Vec<MetricTest>,
    /// Rejects only if every metric rejects.
    pub decision: Decision,
}

impl TostReport {
    pub fn metric(&self, m: Metric) -> Option<&MetricTest> {
        self.metrics.iter().find(|x| x.metric == m)
    }
}

/// Pointwise TOST decisions for each metric and the overall intersection-union decision.
pub fn tost_decide(evidence: &[MetricEvidence], eq: &EquivalenceBands) -> Result<TostReport> {
    let first = evidence
        .first()
        .ok_or_else(|| Error::InvalidConfig("no metrics to test".into()))?;
    let grid = eq.for_metric(first.bands.metric).grid.clone();
    let mut metrics = Vec::with_capacity(evidence.len());
    for ev in evidence {
        let metric = ev.bands.metric;
        let band = eq.for_metric(metric);
        if band.kind != metric.band_kind() {
            return Err(Error::BandKindMismatch {
                metric: metric.name().into(),
                expected: metric.band_kind().name(),
            });
        }
        if band.grid != grid {
            return Err(Error::InvalidGrid("equivalence bands use different grids".into()));
        }
        let t = grid.len();
        for (what, len) in [
            ("estimate", ev.estimate.len()),
            ("lower limit", ev.bands.lower_of_upper_ci.len()),
            ("upper limit", ev.bands.upper_of_lower_ci.len()),
        ] {
            if len != t {
                return Err(Error::ShapeMismatch {
                    what: format!("{} {what}", metric.name()),
                    expected: t,
                    found: len,
                });
            }
        }
        let lower_violations: Vec<usize> = (0..t)
            .filter(|&p| !(band.lower[p] < ev.bands.lower_of_upper_ci[p]))
            .collect();
        let upper_violations: Vec<usize> = (0..t)
            .filter(|&p| !(band.upper[p] > ev.bands.upper_of_lower_ci[p]))
            .collect();
        let mut violations: Vec<usize> = lower_violations.iter().chain(&upper_violations).copied().collect();
        violations.sort_unstable();
        violations.dedup();
        let noninferiority = (metric == Metric::Lambda).then(|| Decision::from_reject(upper_violations.is_empty()));
        metrics.push(MetricTest {
            metric,
            estimate: ev.estimate.clone(),
            bands: ev.bands.clone(),
            equivalence: band.clone(),
            decision: Decision::from_reject(violations.is_empty()),
            lower_violations,
            upper_violations,
            violations,
            noninferiority,
        });
    }
    let decision = Decision::from_reject(metrics.iter().all(|m| m.decision.rejects()));
    Ok(TostReport {
        grid,
        settings: None,
        metrics,
        decision,
    })
}

/// Input data for one of the three sampling designs.
#[derive(Debug, Clone)]
pub enum TostData {
    Independent(FunctionalSample, FunctionalSample),
    Matched(PairedFunctionalSample),
    RandomEffects(GroupedPairedSample),
}

impl TostData {
    pub fn design(&self) -> Design {
        match self {
            TostData::Independent(..) => Design::IndependentIid,
            TostData::Matched(_) => Design::MatchedPairs,
            TostData::RandomEffects(_) => Design::RandomEffectsMatched,
        }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            TostData::Independent(s, _) => &s.grid,
            TostData::Matched(s) => &s.grid,
            TostData::RandomEffects(g) => &g.grid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TostOutcome {
    pub estimates: MetricEstimates,
    pub draws: ReplicateDraws,
    pub report: TostReport,
}

/// Estimate, bootstrap, and decide for every metric the design supports.
pub fn run_tost(data: &TostData, cfg: &BootstrapConfig, eq: &EquivalenceBands) -> Result<TostOutcome> {
    if cfg.design != data.design() {
        return Err(Error::InvalidConfig(format!(
            "configured design {:?} does not match the data layout {:?}",
            cfg.design,
            data.design()
        )));
    }
    let (estimates, draws) = match data {
        TostData::Independent(s1, s2) => {
            let est = if cfg.location_only {
                location_estimate(&s1.curves, &s2.curves)
            } else {
                estimate_metrics_independent(s1, s2)?
            };
            (est, bootstrap_independent(s1, s2, cfg)?)
        }
        TostData::Matched(s) => {
            let est = if cfg.location_only {
                location_estimate(&s.curves_1, &s.curves_2)
            } else {
                estimate_metrics_paired(s)?
            };
            (est, bootstrap_matched(s, cfg)?)
        }
        TostData::RandomEffects(g) => {
            let mut est = anova_decompose(g, cfg.anova_formula)?.metrics_lenient();
            if cfg.location_only {
                est.psi_hat = None;
            }
            (est, bootstrap_random_effects(g, cfg)?)
        }
    };

    let mut evidence = vec![MetricEvidence {
        estimate: estimates.theta_hat.clone(),
        bands: theta_bands(&draws.theta, &estimates.theta_hat, cfg.alpha)?,
    }];
    if !cfg.location_only {
        if let Some(ld) = &draws.lambda {
            evidence.push(MetricEvidence {
                estimate: estimates.lambda_hat.clone(),
                bands: ratio_bands(ld, &estimates.lambda_hat, cfg.alpha, Metric::Lambda)?,
            });
        }
        if let (Some(pd), Some(psi)) = (&draws.psi, &estimates.psi_hat) {
            evidence.push(MetricEvidence {
                estimate: psi.clone(),
                bands: ratio_bands(pd, psi, cfg.alpha, Metric::Psi)?,
            });
        }
    }
    let mut report = tost_decide(&evidence, eq)?;
    report.settings = Some(TostSettings {
        design: cfg.design,
        replicates: cfg.replicates,
        alpha: cfg.alpha,
        seed: cfg.seed,
    });
    Ok(TostOutcome {
        estimates,
        draws,
        report,
    })
}

fn location_estimate(c1: &CurveMatrix, c2: &CurveMatrix) -> MetricEstimates {
    let m1 = c1.column_means();
    let m2 = c2.column_means();
    MetricEstimates {
        theta_hat: m1.iter().zip(&m2).map(|(a, b)| a - b).collect(),
        lambda_hat: vec![1.0; m1.len()],
        psi_hat: None,
    }
}

impl crate::estimators::AnovaDecomposition {
    /// Like [`metrics`](Self::metrics) but leaves a degenerate λ̂ as a
    /// non-positive value for the ratio-band check to report.
    fn metrics_lenient(&self) -> MetricEstimates {
        let a = self.mean_by_group.len() as f64;
        let t = self.mean_overall[0].len();
        let mut theta = vec![0.0; t];
        for g in &self.mean_by_group {
            for p in 0..t {
                theta[p] += g[0][p] - g[1][p];
            }
        }
        theta.iter_mut().for_each(|x| *x /= a);
        MetricEstimates {
            theta_hat: theta,
            lambda_hat: self.sse[0].iter().zip(&self.sse[1]).map(|(a, b)| a / b).collect(),
            psi_hat: Some(
                self.s2_alpha[0]
                    .iter()
                    .zip(&self.s2_alpha[1])
                    .map(|(a, b)| a / b)
                    .collect(),
            ),
        }
    }
}

/// Result of a scalar TOST (a grid with one point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTost {
    pub estimate: f64,
    pub lower_of_upper_ci: f64,
    pub upper_of_lower_ci: f64,
    pub decision: Decision,
}

/// Classic scalar TOST on the difference of means, run through the functional pipeline.
pub fn tost_scalar(x1: &[f64], x2: &[f64], bounds: (f64, f64), cfg: &BootstrapConfig) -> Result<ScalarTost> {
    let grid = Grid::equispaced(1);
    let col = |x: &[f64]| CurveMatrix::from_flat(x.len(), 1, x.to_vec());
    let data = match cfg.design {
        Design::IndependentIid => TostData::Independent(
            FunctionalSample::new(grid.clone(), col(x1)?)?,
            FunctionalSample::new(grid.clone(), col(x2)?)?,
        ),
        Design::MatchedPairs => TostData::Matched(PairedFunctionalSample::new(grid.clone(), col(x1)?, col(x2)?)?),
        Design::RandomEffectsMatched => {
            return Err(Error::InvalidConfig(
                "scalar TOST supports the independent and matched designs".into(),
            ))
        }
    };
    let band = BandPair::constant(&grid, bounds.0, bounds.1, BandKind::Additive)?;
    let eq = EquivalenceBands {
        theta: band,
        lambda: BandPair::unbounded(&grid, BandKind::Multiplicative),
        psi: BandPair::unbounded(&grid, BandKind::Multiplicative),
    };
    let mut location = cfg.clone();
    location.location_only = true;
    let out = run_tost(&data, &location, &eq)?;
    let m = &out.report.metrics[0];
    Ok(ScalarTost {
        estimate: m.estimate[0],
        lower_of_upper_ci: m.bands.lower_of_upper_ci[0],
        upper_of_lower_ci: m.bands.upper_of_lower_ci[0],
        decision: m.decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_column(values: &[f64]) -> CurveMatrix {
        CurveMatrix::from_flat(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn degenerate_draws_collapse_to_estimate() {
        let draws = single_column(&[0.3; 200]);
        let b = theta_bands(&draws, &[0.3], 0.05).unwrap();
        assert_relative_eq!(b.lower_of_upper_ci[0], 0.3);
        assert_relative_eq!(b.upper_of_lower_ci[0], 0.3);
        let r = ratio_bands(&single_column(&[1.7; 200]), &[1.7], 0.05, Metric::Lambda).unwrap();
        assert_relative_eq!(r.lower_of_upper_ci[0], 1.7, max_relative = 1e-14);
        assert_relative_eq!(r.upper_of_lower_ci[0], 1.7, max_relative = 1e-14);
    }

    #[test]
    fn symmetric_draws_give_symmetric_limits() {
        let draws: Vec<f64> = (-50..=50).map(|i| 1.0 + i as f64 * 0.01).collect();
        let b = theta_bands(&single_column(&draws), &[1.0], 0.05).unwrap();
        assert_relative_eq!(
            b.lower_of_upper_ci[0] - 1.0,
            1.0 - b.upper_of_lower_ci[0],
            epsilon = 1e-12
        );
        assert!(b.lower_of_upper_ci[0] < b.upper_of_lower_ci[0]);
    }

    #[test]
    fn five_hand_listed_draws() {
        // B = 5, α = 0.2: rank ⌈0.2·5⌉ = 1, so q_α is the minimum and q⁺_α the maximum.
        let draws = single_column(&[0.9, 1.4, 1.0, 1.2, 0.8]);
        let b = theta_bands(&draws, &[1.1], 0.2).unwrap();
        assert_relative_eq!(b.lower_of_upper_ci[0], 2.2 - 1.4, epsilon = 1e-15);
        assert_relative_eq!(b.upper_of_lower_ci[0], 2.2 - 0.8, epsilon = 1e-15);
        // α = 0.3: rank 2, second smallest 0.9 and second largest 1.2.
        let b = theta_bands(&draws, &[1.1], 0.3).unwrap();
        assert_relative_eq!(b.lower_of_upper_ci[0], 2.2 - 1.2, epsilon = 1e-15);
        assert_relative_eq!(b.upper_of_lower_ci[0], 2.2 - 0.9, epsilon = 1e-15);

        // Ratios: 1/draws = {0.5, 0.8, 1.25, 0.625, 2.0}; sorted 0.5 0.625 0.8 1.25 2.0.
        let ratio = single_column(&[2.0, 1.25, 0.8, 1.6, 0.5]);
        let r = ratio_bands(&ratio, &[1.5], 0.3, Metric::Lambda).unwrap();
        assert_relative_eq!(r.lower_of_upper_ci[0], 2.25 * 0.625, epsilon = 1e-15);
        assert_relative_eq!(r.upper_of_lower_ci[0], 2.25 * 1.25, epsilon = 1e-15);
    }

    #[test]
    fn ratio_limits_invert_under_channel_swap() {
        let draws: Vec<f64> = (0..101).map(|i| 0.6 + 0.01 * i as f64).collect();
        let inv: Vec<f64> = draws.iter().map(|x| 1.0 / x).collect();
        let a = ratio_bands(&single_column(&draws), &[1.1], 0.05, Metric::Lambda).unwrap();
        let b = ratio_bands(&single_column(&inv), &[1.0 / 1.1], 0.05, Metric::Lambda).unwrap();
        assert_relative_eq!(
            b.lower_of_upper_ci[0],
            1.0 / a.upper_of_lower_ci[0],
            max_relative = 1e-12
        );
        assert_relative_eq!(
            b.upper_of_lower_ci[0],
            1.0 / a.lower_of_upper_ci[0],
            max_relative = 1e-12
        );
    }

    #[test]
    fn ratio_bands_reject_nonpositive_input() {
        assert!(ratio_bands(&single_column(&[1.0, 0.0]), &[1.0], 0.05, Metric::Lambda).is_err());
        assert!(ratio_bands(&single_column(&[1.0, 2.0]), &[-1.0], 0.05, Metric::Psi).is_err());
        assert!(ratio_bands(&single_column(&[1.0, 2.0]), &[1.0], 0.05, Metric::Theta).is_err());
    }

    fn evidence(lo: Vec<f64>, hi: Vec<f64>) -> MetricEvidence {
        MetricEvidence {
            estimate: lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            bands: OneSidedBands {
                metric: Metric::Theta,
                lower_of_upper_ci: lo,
                upper_of_lower_ci: hi,
            },
        }
    }

    #[test]
    fn decide_inside_and_touching() {
        let grid = Grid::equispaced(5);
        let eq = EquivalenceBands::cosine(&grid);
        let inside = evidence(vec![-0.05; 5], vec![0.05; 5]);
        let r = tost_decide(&[inside], &eq).unwrap();
        assert_eq!(r.decision, Decision::RejectNonequivalence);
        assert!(r.metrics[0].violations.is_empty());

        let mut hi = vec![0.05; 5];
        hi[2] = eq.theta.upper[2];
        let touching = evidence(vec![-0.05; 5], hi);
        let r = tost_decide(&[touching], &eq).unwrap();
        assert_eq!(r.decision, Decision::FailToReject);
        assert_eq!(r.metrics[0].violations, vec![2]);
        assert_eq!(r.metrics[0].upper_violations, vec![2]);
    }

    #[test]
    fn decide_rejects_kind_mismatch() {
        let grid = Grid::equispaced(3);
        let mut eq = EquivalenceBands::cosine(&grid);
        eq.theta = make_cosine_bands(&grid, BandKind::Multiplicative);
        assert!(matches!(
            tost_decide(&[evidence(vec![0.0; 3], vec![0.1; 3])], &eq),
            Err(Error::BandKindMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::new(Design::MatchedPairs, 99, 0.05, 1)
            .validate()
            .is_err());
        assert!(BootstrapConfig::new(Design::MatchedPairs, 100, 0.5, 1)
            .validate()
            .is_err());
        assert!(BootstrapConfig::new(Design::MatchedPairs, 100, 0.05, 1)
            .validate()
            .is_ok());
        assert_relative_eq!(independent_pointwise_alpha(0.05, 20), 0.05f64.powf(0.05));
    }

    #[test]
    fn constant_groups_exercise_degenerate_path() {
        let grid = Grid::equispaced(2);
        let s1 =
            FunctionalSample::new(grid.clone(), CurveMatrix::from_rows(&vec![vec![1.0, 2.0]; 4]).unwrap()).unwrap();
        let s2 = FunctionalSample::new(grid, CurveMatrix::from_rows(&vec![vec![0.5, 0.5]; 4]).unwrap()).unwrap();
        let cfg = BootstrapConfig::new(Design::IndependentIid, 100, 0.05, 3);
        assert!(matches!(
            bootstrap_independent(&s1, &s2, &cfg),
            Err(Error::DegenerateReplicate { .. })
        ));
        let mut loc = cfg.clone();
        loc.location_only = true;
        let d = bootstrap_independent(&s1, &s2, &loc).unwrap();
        assert!(d.theta.rows().all(|r| r == [0.5, 1.5]));
    }
}
