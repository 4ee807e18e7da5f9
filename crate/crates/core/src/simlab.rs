//! Synthetic data from the paired random-effects model and Monte Carlo
//! estimation of size and power.

use crate::bayes::kernel::{matern_corr, MATERN_JITTER};
use crate::bayes::model::normals;
use crate::bayes::{posterior_equivalence_prob, run_mwg, MwgConfig, PriorSpec};
use crate::error::{Error, Result};
use crate::fdata::{BandKind, BandPair, CurveMatrix, Grid, GroupedPairedSample, PairedFunctionalSample};
use crate::rng::{derive, substream_path, StreamRng};
use crate::tost::{run_tost, BootstrapConfig, Design, EquivalenceBands, Metric, TostData};
use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Version tag of [`TruthSpec::breath_profile`].
pub const BREATH_PROFILE: &str = "breath-v1";

/// Correlation of one channel's curve across grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WithinCorrelation {
    /// Grid points independent, as assumed by the Bayesian likelihood.
    Independent,
    Matern {
        range: f64,
    },
}

impl Default for WithinCorrelation {
    fn default() -> Self {
        WithinCorrelation::Matern { range: 0.1 }
    }
}

impl WithinCorrelation {
    fn factor(&self, grid: &Grid) -> Result<Option<DMatrix<f64>>> {
        match *self {
            WithinCorrelation::Independent => Ok(None),
            WithinCorrelation::Matern { range } => {
                if !(range > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "Matérn range must be positive, got {range}"
                    )));
                }
                let mut c = matern_corr(range, grid);
                for i in 0..c.nrows() {
                    c[(i, i)] += MATERN_JITTER;
                }
                let ch =
                    Cholesky::new(c).ok_or_else(|| Error::NotPositiveDefinite("within-channel correlation".into()))?;
                Ok(Some(ch.l()))
            }
        }
    }
}

/// True parameter curves and design of a simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub grid: Grid,
    pub mu: [Vec<f64>; 2],
    pub s2_eps: [Vec<f64>; 2],
    pub s2_alpha: [Vec<f64>; 2],
    /// Within-channel correlation, shared by errors and random effects.
    #[serde(default)]
    pub within_correlation: WithinCorrelation,
    pub rho_eps: Vec<f64>,
    pub rho_alpha: Vec<f64>,
    pub group_sizes: Vec<usize>,
}

impl TruthSpec {
    /// Parametric reconstruction of breath-volume curves: mean
    /// `½(1 − cos 2πt)`, small variances near the ends of the breath, an
    /// error-variance ratio that dips below the lower ratio band near
    /// `t = 0.5`, equal random-effect variances, `A = 16`, `n_i = 28`.
    pub fn breath_profile(grid: &Grid) -> Self {
        let t = grid.points();
        let mu2: Vec<f64> = t.iter().map(|&x| 0.5 * (1.0 - (2.0 * PI * x).cos())).collect();
        let mu1: Vec<f64> = t
            .iter()
            .zip(&mu2)
            .map(|(&x, m)| m + 0.01 * (2.0 * PI * x).sin())
            .collect();
        let s2_eps2: Vec<f64> = t.iter().map(|&x| 0.002 + 0.02 * (PI * x).sin().powi(2)).collect();
        let ratio: Vec<f64> = t
            .iter()
            .map(|&x| 0.9 - 0.6 * (-((x - 0.5) / 0.12).powi(2)).exp())
            .collect();
        let s2_eps1: Vec<f64> = s2_eps2.iter().zip(&ratio).map(|(v, r)| v * r).collect();
        let s2_alpha: Vec<f64> = s2_eps2.iter().map(|v| 0.25 * v).collect();
        Self {
            grid: grid.clone(),
            mu: [mu1, mu2],
            s2_eps: [s2_eps1, s2_eps2],
            s2_alpha: [s2_alpha.clone(), s2_alpha],
            within_correlation: WithinCorrelation::default(),
            rho_eps: vec![0.5; t.len()],
            rho_alpha: vec![0.9; t.len()],
            group_sizes: vec![28; 16],
        }
    }

    pub fn with_design(mut self, groups: usize, per_group: usize) -> Self {
        self.group_sizes = vec![per_group; groups];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.grid.len();
        let curves = self
            .mu
            .iter()
            .chain(&self.s2_eps)
            .chain(&self.s2_alpha)
            .chain([&self.rho_eps, &self.rho_alpha]);
        for c in curves {
            if c.len() != t {
                return Err(Error::ShapeMismatch {
                    what: "truth curve".into(),
                    expected: t,
                    found: c.len(),
                });
            }
        }
        if self
            .s2_eps
            .iter()
            .chain(&self.s2_alpha)
            .flatten()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "truth variances must be finite and nonnegative".into(),
            ));
        }
        if self.rho_eps.iter().chain(&self.rho_alpha).any(|r| !(r.abs() <= 1.0)) {
            return Err(Error::InvalidConfig(
                "cross-channel correlations must lie in [-1, 1]".into(),
            ));
        }
        if self.group_sizes.len() < 2 || self.group_sizes.contains(&0) {
            return Err(Error::InvalidConfig("design needs at least two nonempty groups".into()));
        }
        Ok(())
    }

    pub fn metric_curve(&self, m: Metric) -> Vec<f64> {
        let ratio = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x / y).collect();
        match m {
            Metric::Theta => self.mu[0].iter().zip(&self.mu[1]).map(|(a, b)| a - b).collect(),
            Metric::Lambda => ratio(&self.s2_eps[0], &self.s2_eps[1]),
            Metric::Psi => ratio(&self.s2_alpha[0], &self.s2_alpha[1]),
        }
    }

    /// Copy with the metric curve replaced; channel 2 is held fixed.
    pub fn with_metric_curve(&self, m: Metric, curve: &[f64]) -> Self {
        let mut out = self.clone();
        match m {
            Metric::Theta => out.mu[0] = self.mu[1].iter().zip(curve).map(|(b, c)| b + c).collect(),
            Metric::Lambda => out.s2_eps[0] = self.s2_eps[1].iter().zip(curve).map(|(b, c)| b * c).collect(),
            Metric::Psi => out.s2_alpha[0] = self.s2_alpha[1].iter().zip(curve).map(|(b, c)| b * c).collect(),
        }
        out
    }
}

/// Pair of curves with pointwise variances `v`, cross-channel correlation
/// `rho`, and within-channel correlation factor `l` (identity if `None`).
fn correlated_pair(rng: &mut StreamRng, v: [&[f64]; 2], rho: &[f64], l: Option<&DMatrix<f64>>) -> [Vec<f64>; 2] {
    let t = rho.len();
    let smooth = |z: Vec<f64>| -> Vec<f64> {
        match l {
            None => z,
            Some(l) => (0..t).map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum()).collect(),
        }
    };
    let u1 = smooth(normals(rng, t));
    let u2 = smooth(normals(rng, t));
    let e1 = (0..t).map(|p| v[0][p].sqrt() * u1[p]).collect();
    let e2 = (0..t)
        .map(|p| v[1][p].sqrt() * (rho[p] * u1[p] + (1.0 - rho[p] * rho[p]).sqrt() * u2[p]))
        .collect();
    [e1, e2]
}

/// Random-effect pairs around `μ`, then responses around each effect.
pub fn generate_dataset_with(truth: &TruthSpec, rng: &mut StreamRng) -> Result<GroupedPairedSample> {
    truth.validate()?;
    let l = truth.within_correlation.factor(&truth.grid)?;
    let t = truth.grid.len();
    let mut groups = Vec::with_capacity(truth.group_sizes.len());
    for &n in &truth.group_sizes {
        let a = correlated_pair(
            rng,
            [&truth.s2_alpha[0], &truth.s2_alpha[1]],
            &truth.rho_alpha,
            l.as_ref(),
        );
        let effect: [Vec<f64>; 2] = [0, 1].map(|j| (0..t).map(|p| truth.mu[j][p] + a[j][p]).collect());
        let mut c = [Vec::with_capacity(n * t), Vec::with_capacity(n * t)];
        for _ in 0..n {
            let e = correlated_pair(rng, [&truth.s2_eps[0], &truth.s2_eps[1]], &truth.rho_eps, l.as_ref());
            for j in 0..2 {
                c[j].extend((0..t).map(|p| effect[j][p] + e[j][p]));
            }
        }
        let [c1, c2] = c;
        groups.push(PairedFunctionalSample::new(
            truth.grid.clone(),
            CurveMatrix::from_flat(n, t, c1)?,
            CurveMatrix::from_flat(n, t, c2)?,
        )?);
    }
    GroupedPairedSample::new(truth.grid.clone(), groups)
}

pub fn generate_dataset(truth: &TruthSpec, seed: u64) -> Result<GroupedPairedSample> {
    generate_dataset_with(truth, &mut substream_path(seed, &[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Truth violates equivalence at exactly the pinned grid point.
    Boundary,
    /// Truth strictly inside the bands.
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSequence {
    pub metric: Metric,
    pub kind: ScenarioKind,
    pub bands: BandPair,
    /// Grid index pinned to the band in boundary sequences.
    pub violation_index: Option<usize>,
    pub scenarios: Vec<TruthSpec>,
}

impl ScenarioSequence {
    pub fn metric_curves(&self) -> Vec<Vec<f64>> {
        self.scenarios.iter().map(|s| s.metric_curve(self.metric)).collect()
    }
}

fn to_work(kind: BandKind, x: f64) -> f64 {
    match kind {
        BandKind::Additive => x,
        BandKind::Multiplicative => x.ln(),
    }
}

fn from_work(kind: BandKind, x: f64) -> f64 {
    match kind {
        BandKind::Additive => x,
        BandKind::Multiplicative => x.exp(),
    }
}

fn check_scenario_inputs(base: &TruthSpec, bands: &BandPair, metric: Metric, count: usize) -> Result<()> {
    base.validate()?;
    if bands.kind != metric.band_kind() {
        return Err(Error::BandKindMismatch {
            metric: metric.name().into(),
            expected: metric.band_kind().name(),
        });
    }
    if bands.grid != base.grid {
        return Err(Error::InvalidGrid("bands and truth use different grids".into()));
    }
    if count < 2 {
        return Err(Error::InvalidConfig(
            "a scenario sequence needs at least two scenarios".into(),
        ));
    }
    Ok(())
}

/// Scenario `k` keeps the metric on the upper band at `violation_index` and
/// moves every other point from the band (`k = 1`) to the band midline
/// (`k = count`) in steps of `(k − 1)/(count − 1)`; ratios move on the log scale.
pub fn boundary_violation_scenarios(
    base: &TruthSpec,
    bands: &BandPair,
    metric: Metric,
    count: usize,
    violation_index: usize,
) -> Result<ScenarioSequence> {
    check_scenario_inputs(base, bands, metric, count)?;
    if violation_index >= base.grid.len() {
        return Err(Error::InvalidConfig(format!(
            "violation index {violation_index} is off the grid"
        )));
    }
    let kind = bands.kind;
    let scenarios = (0..count)
        .map(|k| {
            let f = k as f64 / (count - 1) as f64;
            let curve: Vec<f64> = (0..base.grid.len())
                .map(|p| {
                    let (lo, hi) = (to_work(kind, bands.lower[p]), to_work(kind, bands.upper[p]));
                    if p == violation_index {
                        return bands.upper[p];
                    }
                    let mid = 0.5 * (lo + hi);
                    from_work(kind, hi + f * (mid - hi))
                })
                .collect();
            base.with_metric_curve(metric, &curve)
        })
        .collect();
    Ok(ScenarioSequence {
        metric,
        kind: ScenarioKind::Boundary,
        bands: bands.clone(),
        violation_index: Some(violation_index),
        scenarios,
    })
}

/// Scenario `k` places the metric a fraction `g_k` of the way from the upper
/// band to the midline, `g_k` running from 0.1 to 1.
pub fn interior_scenarios(
    base: &TruthSpec,
    bands: &BandPair,
    metric: Metric,
    count: usize,
) -> Result<ScenarioSequence> {
    check_scenario_inputs(base, bands, metric, count)?;
    let kind = bands.kind;
    let scenarios = (0..count)
        .map(|k| {
            let g = 0.1 + 0.9 * k as f64 / (count - 1) as f64;
            let curve: Vec<f64> = (0..base.grid.len())
                .map(|p| {
                    let (lo, hi) = (to_work(kind, bands.lower[p]), to_work(kind, bands.upper[p]));
                    from_work(kind, hi + g * (0.5 * (lo + hi) - hi))
                })
                .collect();
            base.with_metric_curve(metric, &curve)
        })
        .collect();
    Ok(ScenarioSequence {
        metric,
        kind: ScenarioKind::Interior,
        bands: bands.clone(),
        violation_index: None,
        scenarios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentistArm {
    pub bootstrap: BootstrapConfig,
    pub bands: EquivalenceBands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianArm {
    pub prior: PriorSpec,
    pub mcmc: MwgConfig,
    pub bands: EquivalenceBands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub replicates: usize,
    pub seed: u64,
    pub frequentist: Option<FrequentistArm>,
    pub bayesian: Option<BayesianArm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Frequentist,
    Bayesian,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Frequentist => "frequentist",
            Method::Bayesian => "bayesian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRate {
    /// 1-based scenario index.
    pub scenario: usize,
    pub method: Method,
    /// Replicates that ran to a decision.
    pub replicates: usize,
    pub rejections: usize,
    /// Replicates whose engine returned an error.
    pub errors: usize,
    pub rate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub profile: String,
    pub metric: Metric,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub rows: Vec<ScenarioRate>,
}

impl StudyResult {
    pub fn rate(&self, scenario: usize, method: Method) -> Option<&ScenarioRate> {
        self.rows.iter().find(|r| r.scenario == scenario && r.method == method)
    }

    pub const CSV_HEADER: &'static str = "scenario,method,metric,kind,replicates,rejections,errors,rate,std_error";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.method.name(),
                self.metric.name(),
                match self.kind {
                    ScenarioKind::Boundary => "boundary",
                    ScenarioKind::Interior => "interior",
                },
                r.replicates,
                r.rejections,
                r.errors,
                r.rate,
                r.std_error
            );
        }
        out
    }
}

fn tally(scenario: usize, method: Method, outcomes: &[Result<bool>]) -> ScenarioRate {
    let errors = outcomes.iter().filter(|o| o.is_err()).count();
    let replicates = outcomes.len() - errors;
    let rejections = outcomes.iter().filter(|o| matches!(o, Ok(true))).count();
    let rate = if replicates == 0 {
        0.0
    } else {
        rejections as f64 / replicates as f64
    };
    let std_error = if replicates == 0 {
        0.0
    } else {
        (rate * (1.0 - rate) / replicates as f64).sqrt()
    };
    ScenarioRate {
        scenario,
        method,
        replicates,
        rejections,
        errors,
        rate,
        std_error,
    }
}

fn frequentist_rejects(arm: &FrequentistArm, metric: Metric, data: GroupedPairedSample, seed: u64) -> Result<bool> {
    let mut cfg = arm.bootstrap.clone();
    cfg.seed = seed;
    cfg.design = Design::RandomEffectsMatched;
    cfg.location_only = metric == Metric::Theta;
    let out = run_tost(&TostData::RandomEffects(data), &cfg, &arm.bands)?;
    out.report
        .metric(metric)
        .map(|m| m.decision.rejects())
        .ok_or_else(|| Error::InvalidConfig(format!("metric {} not tested", metric.name())))
}

fn bayesian_rejects(arm: &BayesianArm, metric: Metric, data: &GroupedPairedSample, seed: u64) -> Result<bool> {
    let mut mcmc = arm.mcmc.clone();
    mcmc.seed = seed;
    let draws = run_mwg(data, &arm.prior, &mcmc)?;
    let probs = posterior_equivalence_prob(&draws, &arm.bands)?;
    Ok(probs.get(metric) >= arm.prior.gamma)
}

/// Simulate `replicates` datasets per scenario and tally rejections of
/// nonequivalence for the sequence's metric. Engine errors are counted per
/// replicate and excluded from the rate.
pub fn run_study(seq: &ScenarioSequence, cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.replicates < 50 {
        return Err(Error::InvalidConfig(format!(
            "at least 50 replicates required, got {}",
            cfg.replicates
        )));
    }
    if cfg.frequentist.is_none() && cfg.bayesian.is_none() {
        return Err(Error::InvalidConfig("no method selected".into()));
    }
    let mut rows = Vec::new();
    for (s, truth) in seq.scenarios.iter().enumerate() {
        let per_rep: Vec<(Option<Result<bool>>, Option<Result<bool>>)> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let coords = [s as u64, r as u64];
                let engine_seed = derive(derive(cfg.seed, s as u64), r as u64);
                let data = match generate_dataset_with(truth, &mut substream_path(cfg.seed, &coords)) {
                    Ok(d) => d,
                    Err(e) => {
                        let msg = e.to_string();
                        let fail = || Some(Err(Error::InvalidConfig(msg.clone())));
                        return (cfg.frequentist.as_ref().and(fail()), cfg.bayesian.as_ref().and(fail()));
                    }
                };
                let b = cfg
                    .bayesian
                    .as_ref()
                    .map(|arm| bayesian_rejects(arm, seq.metric, &data, engine_seed));
                let f = cfg
                    .frequentist
                    .as_ref()
                    .map(|arm| frequentist_rejects(arm, seq.metric, data, engine_seed));
                (f, b)
            })
            .collect();
        let (freq, bayes): (Vec<_>, Vec<_>) = per_rep.into_iter().unzip();
        if cfg.frequentist.is_some() {
            let outcomes: Vec<Result<bool>> = freq.into_iter().flatten().collect();
            rows.push(tally(s + 1, Method::Frequentist, &outcomes));
        }
        if cfg.bayesian.is_some() {
            let outcomes: Vec<Result<bool>> = bayes.into_iter().flatten().collect();
            rows.push(tally(s + 1, Method::Bayesian, &outcomes));
        }
    }
    for r in &rows {
        if r.errors > 0 {
            log::warn!(
                "scenario {} ({}): {} replicates failed",
                r.scenario,
                r.method.name(),
                r.errors
            );
        }
    }
    Ok(StudyResult {
        profile: BREATH_PROFILE.into(),
        metric: seq.metric,
        kind: seq.kind,
        seed: cfg.seed,
        rows,
    })
}
