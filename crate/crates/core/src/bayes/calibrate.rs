//! Prior probabilities of the equivalence region and calibration of the
//! prior scale that attains a target probability.

use super::kernel::matern_corr;
use super::kernel::MATERN_JITTER;
use super::mvn::{mvn_rectangle_prob, MvnAccuracy, MvnEstimate};
use crate::error::{Error, Result};
use crate::fdata::{BandKind, BandPair};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Bracket on `s²` searched by [`calibrate_prior_scale`].
pub const SCALE_BRACKET: (f64, f64) = (1e-8, 1e4);

/// Band limits on the scale where the mixture prior is Gaussian: the raw
/// bands for additive metrics, their logarithms for ratios.
pub fn working_limits(bands: &BandPair) -> (Vec<f64>, Vec<f64>) {
    match bands.kind {
        BandKind::Additive => (bands.lower.clone(), bands.upper.clone()),
        BandKind::Multiplicative => (
            bands.lower.iter().map(|x| x.ln()).collect(),
            bands.upper.iter().map(|x| x.ln()).collect(),
        ),
    }
}

fn correlation(range: f64, bands: &BandPair) -> DMatrix<f64> {
    let mut c = matern_corr(range, &bands.grid);
    for i in 0..c.nrows() {
        c[(i, i)] += MATERN_JITTER;
    }
    c
}

fn symmetric(lo: &[f64], hi: &[f64]) -> bool {
    lo.iter()
        .zip(hi)
        .all(|(l, h)| (l + h).abs() <= 1e-12 * h.abs().max(1.0))
}

fn mixture_prob(corr: &DMatrix<f64>, s2: f64, lo: &[f64], hi: &[f64], acc: &MvnAccuracy) -> Result<MvnEstimate> {
    let cov = corr * (2.0 * s2);
    let t = lo.len();
    // Component centred on the lower band: X − lo ∈ (0, hi − lo).
    let width: Vec<f64> = hi.iter().zip(lo).map(|(h, l)| h - l).collect();
    let first = mvn_rectangle_prob(&vec![0.0; t], &cov, &vec![0.0; t], &width, acc)?;
    if symmetric(lo, hi) {
        return Ok(first);
    }
    let neg: Vec<f64> = width.iter().map(|w| -w).collect();
    let second = mvn_rectangle_prob(&vec![0.0; t], &cov, &neg, &vec![0.0; t], acc)?;
    Ok(MvnEstimate {
        prob: 0.5 * (first.prob + second.prob),
        std_error: 0.5 * (first.std_error.powi(2) + second.std_error.powi(2)).sqrt(),
        evaluations: first.evaluations + second.evaluations,
    })
}

/// Prior probability that the metric curve lies inside the bands when its
/// working-scale prior is the 50/50 mixture of `GP(lower, 2s²Γ)` and
/// `GP(upper, 2s²Γ)`.
pub fn prior_equivalence_prob(range: f64, s2: f64, bands: &BandPair, acc: &MvnAccuracy) -> Result<MvnEstimate> {
    if !(range > 0.0 && s2 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "prior needs positive range and scale, got a={range}, s2={s2}"
        )));
    }
    let (lo, hi) = working_limits(bands);
    mixture_prob(&correlation(range, bands), s2, &lo, &hi, acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub s2: f64,
    pub prob: f64,
    pub std_error: f64,
    pub iterations: usize,
}

/// Bisection on `log s²` for the scale whose prior equivalence probability
/// equals `target`, to within `1e-3` relative. The same lattice shifts are
/// reused at every trial scale, so the estimated probability is a smooth
/// monotone function of `s²`.
pub fn calibrate_prior_scale(range: f64, bands: &BandPair, target: f64, acc: &MvnAccuracy) -> Result<Calibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target probability must lie in (0, 1), got {target}"
        )));
    }
    let (lo, hi) = working_limits(bands);
    let corr = correlation(range, bands);
    let eval = |s2: f64| mixture_prob(&corr, s2, &lo, &hi, acc);

    let (mut lo_s, mut hi_s) = (SCALE_BRACKET.0.ln(), SCALE_BRACKET.1.ln());
    let p_small = eval(SCALE_BRACKET.0)?.prob;
    let p_large = eval(SCALE_BRACKET.1)?.prob;
    if !(target <= p_small && target >= p_large) {
        return Err(Error::CalibrationBracket {
            target,
            low: p_large,
            high: p_small,
        });
    }
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mid = 0.5 * (lo_s + hi_s);
        let est = eval(mid.exp())?;
        let done = (est.prob - target).abs() <= 1e-3 * target || hi_s - lo_s < 1e-12 || iterations >= 200;
        if done {
            return Ok(Calibration {
                s2: mid.exp(),
                prob: est.prob,
                std_error: est.std_error,
                iterations,
            });
        }
        if est.prob > target {
            lo_s = mid;
        } else {
            hi_s = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::{make_cosine_bands, Grid};
    use crate::stats::norm_quantile;
    use approx::assert_relative_eq;

    #[test]
    fn single_point_has_analytic_inverse() {
        let grid = Grid::equispaced(1);
        let bands = make_cosine_bands(&grid, BandKind::Additive);
        let width = bands.upper[0] - bands.lower[0];
        for target in [0.05, 0.2, 0.4] {
            let cal = calibrate_prior_scale(0.3, &bands, target, &MvnAccuracy::default()).unwrap();
            // P(0 < X < w) = Φ(w / √(2s²)) − ½.
            let exact = (width / norm_quantile(target + 0.5)).powi(2) / 2.0;
            assert_relative_eq!(cal.s2, exact, max_relative = 1e-2);
            assert!((cal.prob - target).abs() <= 1e-3 * target);
        }
    }

    #[test]
    fn larger_target_gives_smaller_scale() {
        let grid = Grid::equispaced(5);
        let bands = make_cosine_bands(&grid, BandKind::Additive);
        let acc = MvnAccuracy {
            abs_tol: 1e-5,
            ..MvnAccuracy::default()
        };
        let a = calibrate_prior_scale(0.3, &bands, 0.02, &acc).unwrap();
        let b = calibrate_prior_scale(0.3, &bands, 0.05, &acc).unwrap();
        assert!(b.s2 < a.s2);
    }

    #[test]
    fn unreachable_target_reports_bracket() {
        let grid = Grid::equispaced(5);
        let bands = make_cosine_bands(&grid, BandKind::Additive);
        assert!(matches!(
            calibrate_prior_scale(0.3, &bands, 0.9, &MvnAccuracy::default()),
            Err(Error::CalibrationBracket { .. })
        ));
    }
}
