//! Multivariate normal rectangle probabilities by randomized quasi-Monte
//! Carlo over the sequential-conditioning (Genz) transform.

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::stats::{norm_cdf, norm_isf, norm_quantile, norm_sf};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnAccuracy {
    /// Stop once the standard error is at most this.
    pub abs_tol: f64,
    /// ... or at most this fraction of the estimate.
    pub rel_tol: f64,
    pub max_evals: usize,
    /// Number of independent random shifts of the lattice.
    pub shifts: usize,
    pub seed: u64,
}

impl Default for MvnAccuracy {
    fn default() -> Self {
        Self {
            abs_tol: 1e-4,
            rel_tol: 0.0,
            max_evals: 20_000_000,
            shifts: 12,
            seed: 0x6d76_6e31,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnEstimate {
    pub prob: f64,
    pub std_error: f64,
    pub evaluations: usize,
}

/// `Φ(b) − Φ(a)` without cancellation in either tail.
fn interval_prob(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        norm_sf(a) - norm_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

/// Inverse of the truncated normal CDF on `(a, b)` at fraction `w`.
fn truncated_inverse(a: f64, b: f64, w: f64) -> f64 {
    if a > 0.0 {
        let (qa, qb) = (norm_sf(a), norm_sf(b));
        norm_isf((qa - w * (qa - qb)).max(f64::MIN_POSITIVE))
    } else {
        let (pa, pb) = (norm_cdf(a), norm_cdf(b));
        norm_quantile((pa + w * (pb - pa)).max(f64::MIN_POSITIVE))
    }
    .clamp(a, b)
}

fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

/// Cholesky factor with Genz–Bretz variable reordering: at each step the
/// remaining coordinate with the smallest conditional interval probability
/// goes next. Returns the factor and the permuted, centered bounds.
fn reordered_cholesky(
    cov: &DMatrix<f64>,
    mut a: Vec<f64>,
    mut b: Vec<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let n = a.len();
    let mut c = cov.clone();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut best = (f64::INFINITY, i);
        for j in i..n {
            let s2 = c[(j, j)] - (0..i).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
            if s2 <= 0.0 {
                continue;
            }
            let s = s2.sqrt();
            let shift: f64 = (0..i).map(|k| l[(j, k)] * y[k]).sum();
            let p = interval_prob((a[j] - shift) / s, (b[j] - shift) / s);
            if p < best.0 {
                best = (p, j);
            }
        }
        let j = best.1;
        if j != i {
            c.swap_rows(i, j);
            c.swap_columns(i, j);
            l.swap_rows(i, j);
            a.swap(i, j);
            b.swap(i, j);
        }
        let s2 = c[(i, i)] - (0..i).map(|k| l[(i, k)] * l[(i, k)]).sum::<f64>();
        if !(s2 > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "{n}×{n} covariance loses rank at pivot {i}"
            )));
        }
        let lii = s2.sqrt();
        l[(i, i)] = lii;
        for r in (i + 1)..n {
            let v = c[(r, i)] - (0..i).map(|k| l[(r, k)] * l[(i, k)]).sum::<f64>();
            l[(r, i)] = v / lii;
        }
        let shift: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        let (lo, hi) = ((a[i] - shift) / lii, (b[i] - shift) / lii);
        let mass = interval_prob(lo, hi);
        y[i] = if mass > 0.0 {
            (pdf(lo) - pdf(hi)) / mass
        } else if lo.is_finite() {
            lo
        } else {
            hi
        };
    }
    Ok((l, a, b))
}

struct Transformed {
    l: DMatrix<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Transformed {
    fn first_mass(&self) -> f64 {
        let l0 = self.l[(0, 0)];
        interval_prob(self.a[0] / l0, self.b[0] / l0)
    }

    /// Integrand at a point of the unit cube of dimension `n − 1`.
    fn eval(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let n = self.a.len();
        let l0 = self.l[(0, 0)];
        let (mut lo, mut hi) = (self.a[0] / l0, self.b[0] / l0);
        let mut f = interval_prob(lo, hi);
        for i in 1..n {
            if f <= 0.0 {
                return 0.0;
            }
            y[i - 1] = truncated_inverse(lo, hi, w[i - 1]);
            let shift: f64 = (0..i).map(|k| self.l[(i, k)] * y[k]).sum();
            let lii = self.l[(i, i)];
            lo = (self.a[i] - shift) / lii;
            hi = (self.b[i] - shift) / lii;
            f *= interval_prob(lo, hi);
        }
        f
    }
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if (2..k).take_while(|d| d * d <= k).all(|d| !k.is_multiple_of(d)) {
            out.push(k);
        }
        k += 1;
    }
    out
}

/// `P{lower < X < upper}` for `X ~ N(mean, cov)`.
///
/// Uses a Richtmyer lattice (`frac(j·√p_k)`) with independent uniform
/// shifts, a baker's transform, and antithetic pairs. The standard error is
/// the spread of the per-shift means; the lattice length doubles until the
/// error meets `acc`.
pub fn mvn_rectangle_prob(
    mean: &[f64],
    cov: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    acc: &MvnAccuracy,
) -> Result<MvnEstimate> {
    let n = mean.len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty MVN dimension".into()));
    }
    for (what, len) in [
        ("covariance", cov.nrows()),
        ("covariance columns", cov.ncols()),
        ("lower", lower.len()),
        ("upper", upper.len()),
    ] {
        if len != n {
            return Err(Error::ShapeMismatch {
                what: format!("MVN {what}"),
                expected: n,
                found: len,
            });
        }
    }
    if let Some(i) = (0..n).position(|i| !(lower[i] < upper[i])) {
        return Err(Error::InvalidBand(format!(
            "rectangle lower bound not below upper bound at coordinate {i}"
        )));
    }
    if acc.shifts < 2 {
        return Err(Error::InvalidConfig("at least two lattice shifts required".into()));
    }
    let a: Vec<f64> = lower.iter().zip(mean).map(|(l, m)| l - m).collect();
    let b: Vec<f64> = upper.iter().zip(mean).map(|(u, m)| u - m).collect();
    let (l, a, b) = reordered_cholesky(cov, a, b)?;
    let tr = Transformed { l, a, b };
    if n == 1 {
        return Ok(MvnEstimate {
            prob: tr.first_mass(),
            std_error: 0.0,
            evaluations: 1,
        });
    }

    let dim = n - 1;
    let gen: Vec<f64> = primes(dim).iter().map(|&p| (p as f64).sqrt().fract()).collect();
    let mut rng = substream(acc.seed, 0);
    let shifts: Vec<Vec<f64>> = (0..acc.shifts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut sums = vec![0.0; acc.shifts];
    let mut w = vec![0.0; dim];
    let mut w_anti = vec![0.0; dim];
    let mut y = vec![0.0; n];
    let mut done = 0usize;
    let mut target = 256usize;
    let mut evaluations = 0usize;
    loop {
        for (s, shift) in shifts.iter().enumerate() {
            for j in (done + 1)..=target {
                let jf = j as f64;
                for k in 0..dim {
                    let x = (jf * gen[k] + shift[k]).fract();
                    let baker = 1.0 - (2.0 * x - 1.0).abs();
                    w[k] = baker;
                    w_anti[k] = 1.0 - baker;
                }
                sums[s] += 0.5 * (tr.eval(&w, &mut y) + tr.eval(&w_anti, &mut y));
            }
        }
        evaluations += 2 * acc.shifts * (target - done);
        done = target;
        let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
        let k = acc.shifts as f64;
        let prob = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - prob).powi(2)).sum::<f64>() / (k - 1.0);
        let std_error = (var / k).sqrt();
        let tol = acc.abs_tol.max(acc.rel_tol * prob);
        if std_error <= tol {
            return Ok(MvnEstimate {
                prob,
                std_error,
                evaluations,
            });
        }
        if evaluations + 2 * acc.shifts * target > acc.max_evals {
            return Err(Error::AccuracyUnreachable {
                requested: tol,
                achieved: std_error,
                evaluations,
            });
        }
        target *= 2;
    }
}
