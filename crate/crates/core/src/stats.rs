//! Small numerical helpers shared by the engines.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

/// Rank (1-based) selected by the inverse-CDF rule `⌈pB⌉`, clamped to `[1, B]`.
///
/// A relative slack of 1e-12 keeps products like `0.05 * 1000` from rounding
/// up to the next rank.
pub fn inverse_cdf_rank(p: f64, len: usize) -> usize {
    let raw = p * len as f64;
    let rank = (raw - raw.abs() * 1e-12).ceil() as usize;
    rank.clamp(1, len)
}

/// Lower `p`-quantile of `sorted` (ascending): the `⌈pB⌉`-th smallest value.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    sorted[inverse_cdf_rank(p, sorted.len()) - 1]
}

/// Upper-tail `p`-quantile of `sorted` (ascending): the `⌈pB⌉`-th largest value.
pub fn upper_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    sorted[sorted.len() - inverse_cdf_rank(p, sorted.len())]
}

/// Lower `p`-quantile of unsorted values.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation scaled to be consistent for the normal sd.
pub fn mad(values: &[f64], center: f64) -> f64 {
    let dev: Vec<f64> = values.iter().map(|x| (x - center).abs()).collect();
    1.482_602_218_505_602 * median(&dev)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// Standard normal quantile of an upper-tail probability `q = 1 - p`.
pub fn norm_isf(q: f64) -> f64 {
    -norm_quantile(q)
}
