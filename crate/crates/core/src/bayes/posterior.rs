//! Posterior draws, convergence diagnostics, equivalence probabilities and
//! simultaneous credible bands.

use crate::error::{Error, Result};
use crate::fdata::{BandPair, CurveMatrix, Grid};
use crate::stats::{inverse_cdf_rank, mad, median};
use crate::tost::{EquivalenceBands, Metric};
use serde::{Deserialize, Serialize};

/// Split R-hat above this raises the diagnostics warning flag.
pub const RHAT_WARNING: f64 = 1.1;

/// Minimum number of draws for probability and band summaries.
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Post-burn-in random-walk acceptance of the log-variance blocks
    /// `(σ²_ε,1, σ²_ε,2, σ²_α,1, σ²_α,2)`.
    pub log_var_acceptance: [f64; 4],
    /// Post-burn-in acceptance of the `ρ_ε` and `ρ_α` updates.
    pub rho_acceptance: [f64; 2],
    /// Post-burn-in acceptance of the pointwise level moves `(ε, α)`.
    pub level_acceptance: [f64; 2],
    /// Post-burn-in acceptance of the pointwise inverse-Wishart moves `(ε, α)`.
    pub local_acceptance: [f64; 2],
    /// Post-burn-in acceptance of the effect-marginal moves on `Σ_α`.
    pub marginal_acceptance: f64,
    /// Fraction of retained draws with each indicator `(δ_μ, δ_ε, δ_α)` on the upper band.
    pub indicator_upper_fraction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub chains: Vec<ChainDiagnostics>,
    pub rhat_theta: Vec<f64>,
    pub rhat_log_lambda: Vec<f64>,
    pub rhat_log_psi: Vec<f64>,
    pub max_rhat: f64,
    pub rhat_warning: bool,
}

/// Pooled posterior draws of the three metrics, one row per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub grid: Grid,
    pub theta: CurveMatrix,
    pub lambda: CurveMatrix,
    pub psi: CurveMatrix,
    /// Chain index of every row.
    pub chain: Vec<usize>,
    pub diagnostics: SamplerDiagnostics,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.theta.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn metric(&self, m: Metric) -> &CurveMatrix {
        match m {
            Metric::Theta => &self.theta,
            Metric::Lambda => &self.lambda,
            Metric::Psi => &self.psi,
        }
    }
}

/// Split R-hat of one scalar from `chains[c][draw]`.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let pieces: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let n = half as f64;
    let m = pieces.len() as f64;
    let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

fn check_band(draws: &CurveMatrix, band: &BandPair) -> Result<()> {
    if draws.ncols() != band.grid.len() {
        return Err(Error::ShapeMismatch {
            what: "posterior draws vs bands".into(),
            expected: band.grid.len(),
            found: draws.ncols(),
        });
    }
    Ok(())
}

/// Fraction of draws lying strictly inside the band at every grid point.
pub fn fraction_inside(draws: &CurveMatrix, band: &BandPair) -> Result<f64> {
    check_band(draws, band)?;
    let inside = draws
        .rows()
        .filter(|r| {
            r.iter()
                .zip(&band.lower)
                .zip(&band.upper)
                .all(|((x, l), u)| l < x && x < u)
        })
        .count();
    Ok(inside as f64 / draws.nrows() as f64)
}

/// Fraction of draws lying strictly below the upper band everywhere.
pub fn fraction_below_upper(draws: &CurveMatrix, band: &BandPair) -> Result<f64> {
    check_band(draws, band)?;
    let below = draws
        .rows()
        .filter(|r| r.iter().zip(&band.upper).all(|(x, u)| x < u))
        .count();
    Ok(below as f64 / draws.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceProbabilities {
    pub theta: f64,
    pub lambda: f64,
    pub psi: f64,
    /// Noninferiority: the error-variance ratio stays below its upper band.
    pub lambda_below_upper: f64,
}

impl EquivalenceProbabilities {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Theta => self.theta,
            Metric::Lambda => self.lambda,
            Metric::Psi => self.psi,
        }
    }
}

/// `P{H_a | data}` per metric, estimated by the fraction of posterior curves
/// inside the equivalence bands.
pub fn posterior_equivalence_prob(
    draws: &PosteriorDraws,
    bands: &EquivalenceBands,
) -> Result<EquivalenceProbabilities> {
    if draws.len() < MIN_DRAWS {
        return Err(Error::InsufficientSample(format!(
            "{} posterior draws; at least {MIN_DRAWS} required",
            draws.len()
        )));
    }
    Ok(EquivalenceProbabilities {
        theta: fraction_inside(&draws.theta, &bands.theta)?,
        lambda: fraction_inside(&draws.lambda, &bands.lambda)?,
        psi: fraction_inside(&draws.psi, &bands.psi)?,
        lambda_below_upper: fraction_below_upper(&draws.lambda, &bands.lambda)?,
    })
}

/// Simultaneous band `center ± c · spread` on the scale of the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousBand {
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub multiplier: f64,
    pub coverage: f64,
    /// Fraction of the input draws lying entirely inside the (closed) band.
    pub achieved_coverage: f64,
    /// Grid indices with zero spread, where the band is the range of the draws.
    pub fallback: Vec<usize>,
}

/// Max-type multiplier band: centre at the pointwise median, spread the
/// pointwise MAD, and `c` the `⌈coverage·M⌉`-th smallest value of
/// `max_t |x(t) − center(t)| / spread(t)` over the draws.
pub fn simultaneous_bands(draws: &CurveMatrix, coverage: f64) -> Result<SimultaneousBand> {
    let (m, t) = (draws.nrows(), draws.ncols());
    if m < MIN_DRAWS {
        return Err(Error::InsufficientSample(format!(
            "{m} draws; at least {MIN_DRAWS} required"
        )));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "coverage must lie in (0, 1), got {coverage}"
        )));
    }
    let mut center = Vec::with_capacity(t);
    let mut spread = Vec::with_capacity(t);
    let mut range = Vec::with_capacity(t);
    for p in 0..t {
        let col = draws.column(p);
        let c = median(&col);
        spread.push(mad(&col, c));
        center.push(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        range.push((lo, hi));
    }
    let fallback: Vec<usize> = (0..t).filter(|&p| !(spread[p] > 0.0)).collect();
    let mut maxdev: Vec<f64> = draws
        .rows()
        .map(|r| {
            (0..t)
                .filter(|p| spread[*p] > 0.0)
                .map(|p| (r[p] - center[p]).abs() / spread[p])
                .fold(0.0, f64::max)
        })
        .collect();
    maxdev.sort_by(f64::total_cmp);
    let multiplier = maxdev[inverse_cdf_rank(coverage, m) - 1];
    let (mut lower, mut upper) = (Vec::with_capacity(t), Vec::with_capacity(t));
    for p in 0..t {
        if spread[p] > 0.0 {
            lower.push(center[p] - multiplier * spread[p]);
            upper.push(center[p] + multiplier * spread[p]);
        } else {
            lower.push(range[p].0);
            upper.push(range[p].1);
        }
    }
    if !fallback.is_empty() {
        log::warn!(
            "zero posterior spread at {} grid points; using the draw range there",
            fallback.len()
        );
    }
    let inside = draws
        .rows()
        .filter(|r| (0..t).all(|p| lower[p] <= r[p] && r[p] <= upper[p]))
        .count();
    Ok(SimultaneousBand {
        center,
        lower,
        upper,
        multiplier,
        coverage,
        achieved_coverage: inside as f64 / m as f64,
        fallback,
    })
}

/// Simultaneous band for a metric; ratio metrics are banded on the log scale
/// and mapped back.
pub fn metric_simultaneous_bands(draws: &PosteriorDraws, metric: Metric, coverage: f64) -> Result<SimultaneousBand> {
    simultaneous_bands_for(draws.metric(metric), metric, coverage)
}

/// [`metric_simultaneous_bands`] on a bare matrix of metric draws.
pub fn simultaneous_bands_for(x: &CurveMatrix, metric: Metric, coverage: f64) -> Result<SimultaneousBand> {
    if metric == Metric::Theta {
        return simultaneous_bands(x, coverage);
    }
    let logs = CurveMatrix::from_flat(x.nrows(), x.ncols(), x.as_slice().iter().map(|v| v.ln()).collect())?;
    let b = simultaneous_bands(&logs, coverage)?;
    let exp = |v: Vec<f64>| v.into_iter().map(f64::exp).collect();
    Ok(SimultaneousBand {
        center: exp(b.center),
        lower: exp(b.lower),
        upper: exp(b.upper),
        ..b
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::{make_cosine_bands, BandKind};
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn hand_made_fractions() {
        let grid = Grid::equispaced(3);
        let band = make_cosine_bands(&grid, BandKind::Additive);
        let mut rows = vec![vec![0.0; 3]; 4];
        rows.extend(vec![vec![0.0, 0.0, 0.5]; 6]);
        let m = CurveMatrix::from_rows(&rows).unwrap();
        assert_eq!(fraction_inside(&m, &band).unwrap(), 0.4);
        assert_eq!(fraction_below_upper(&m, &band).unwrap(), 0.4);
        let all = CurveMatrix::from_rows(&vec![vec![0.01, -0.02, 0.0]; 5]).unwrap();
        assert_eq!(fraction_inside(&all, &band).unwrap(), 1.0);
    }

    #[test]
    fn widening_never_lowers_probability() {
        let grid = Grid::equispaced(4);
        let mut rng = substream(5, 0);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let m = CurveMatrix::from_rows(&rows).unwrap();
        let mut prev = 0.0;
        for w in [0.05, 0.1, 0.2, 0.4] {
            let band = BandPair::constant(&grid, -w, w, BandKind::Additive).unwrap();
            let f = fraction_inside(&m, &band).unwrap();
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn constant_draws_give_zero_width() {
        let m = CurveMatrix::from_rows(&vec![vec![0.3, -1.0]; 120]).unwrap();
        let b = simultaneous_bands(&m, 0.95).unwrap();
        assert_eq!(b.lower, b.upper);
        assert_eq!(b.fallback, vec![0, 1]);
        assert_eq!(b.achieved_coverage, 1.0);
    }

    #[test]
    fn multiplier_matches_brute_force_search() {
        let mut rng = substream(6, 0);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                vec![
                    rng.sample::<f64, _>(StandardNormal),
                    2.0 * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect();
        let m = CurveMatrix::from_rows(&rows).unwrap();
        let b = simultaneous_bands(&m, 0.95).unwrap();
        // Smallest candidate c whose band holds at least 95% of draws.
        let spread: Vec<f64> = (0..2).map(|p| mad(&m.column(p), b.center[p])).collect();
        let mut candidates: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                (0..2)
                    .map(|p| (r[p] - b.center[p]).abs() / spread[p])
                    .collect::<Vec<_>>()
            })
            .collect();
        candidates.sort_by(f64::total_cmp);
        let best = candidates
            .into_iter()
            .find(|&c| {
                let inside = rows
                    .iter()
                    .filter(|r| (0..2).all(|p| (r[p] - b.center[p]).abs() <= c * spread[p]))
                    .count();
                inside as f64 >= 0.95 * 400.0
            })
            .unwrap();
        assert_eq!(b.multiplier, best);
        assert!(b.achieved_coverage >= 0.95);
    }

    #[test]
    fn rhat_detects_disagreeing_chains() {
        let mut rng = substream(7, 0);
        let mut draw =
            |shift: f64| -> Vec<f64> { (0..500).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect() };
        let same = [draw(0.0), draw(0.0), draw(0.0)];
        assert!(split_rhat(&same) < 1.02);
        let apart = [draw(0.0), draw(3.0), draw(0.0)];
        assert!(split_rhat(&apart) > 1.1);
    }
}
