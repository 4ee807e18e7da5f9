//! Pointwise plug-in estimators for the equivalence metrics and the
//! random-effects ANOVA quantities they rest on.

use crate::error::{Error, Result};
use crate::fdata::{FunctionalSample, GroupedPairedSample, PairedFunctionalSample};
use serde::{Deserialize, Serialize};

/// Floor applied to random-effect variance estimates, which can go negative.
pub const S2_ALPHA_FLOOR: f64 = 1e-12;

/// Point estimates of θ = μ₁ − μ₂, λ = σ²_ε,₁/σ²_ε,₂ and (grouped designs) ψ = σ²_α,₁/σ²_α,₂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimates {
    pub theta_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub psi_hat: Option<Vec<f64>>,
}

/// Which sums of squares feed the random-effect variance estimate.
///
/// `Printed` measures SSE around the overall channel mean and divides it by
/// `N - 1`; `Classical` uses within-group sums of squares over `N - A`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnovaFormula {
    #[default]
    Printed,
    Classical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaDecomposition {
    pub formula: AnovaFormula,
    pub group_sizes: Vec<usize>,
    /// Overall mean curve per channel (ȳ_j).
    pub mean_overall: [Vec<f64>; 2],
    /// Group mean curves (ȳ_{i,j}), which double as the random-effect estimates α̂_{i,j}.
    pub mean_by_group: Vec<[Vec<f64>; 2]>,
    pub sse: [Vec<f64>; 2],
    pub ssa: [Vec<f64>; 2],
    pub n_star: f64,
    /// Random-effect variance estimate after clipping at [`S2_ALPHA_FLOOR`].
    pub s2_alpha: [Vec<f64>; 2],
    /// The same estimate before clipping.
    pub s2_alpha_raw: [Vec<f64>; 2],
}

pub fn pointwise_mean(s: &FunctionalSample) -> Vec<f64> {
    s.curves.column_means()
}

pub fn pointwise_var(s: &FunctionalSample) -> Result<Vec<f64>> {
    if s.len() < 2 {
        return Err(Error::InsufficientSample(
            "pointwise variance needs at least 2 curves".into(),
        ));
    }
    Ok(s.curves.column_variances())
}

pub(crate) fn ratio_checked(num: &[f64], den: &[f64], what: &str) -> Result<Vec<f64>> {
    num.iter()
        .zip(den)
        .enumerate()
        .map(|(t, (a, b))| {
            if *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite() {
                Ok(a / b)
            } else {
                Err(Error::DegenerateVariance {
                    what: what.into(),
                    index: t,
                })
            }
        })
        .collect()
}

pub fn estimate_metrics_paired(s: &PairedFunctionalSample) -> Result<MetricEstimates> {
    if s.len() < 2 {
        return Err(Error::InsufficientSample(
            "matched design needs at least 2 pairs".into(),
        ));
    }
    let m1 = s.curves_1.column_means();
    let m2 = s.curves_2.column_means();
    let v1 = s.curves_1.column_variances();
    let v2 = s.curves_2.column_variances();
    Ok(MetricEstimates {
        theta_hat: m1.iter().zip(&m2).map(|(a, b)| a - b).collect(),
        lambda_hat: ratio_checked(&v1, &v2, "variance ratio")?,
        psi_hat: None,
    })
}

pub fn estimate_metrics_independent(s1: &FunctionalSample, s2: &FunctionalSample) -> Result<MetricEstimates> {
    if s1.grid != s2.grid {
        return Err(Error::InvalidGrid("the two samples use different grids".into()));
    }
    let v1 = pointwise_var(s1)?;
    let v2 = pointwise_var(s2)?;
    let m1 = pointwise_mean(s1);
    let m2 = pointwise_mean(s2);
    Ok(MetricEstimates {
        theta_hat: m1.iter().zip(&m2).map(|(a, b)| a - b).collect(),
        lambda_hat: ratio_checked(&v1, &v2, "variance ratio")?,
        psi_hat: None,
    })
}

/// One-way random-effects decomposition of both channels.
///
/// `channels[j]` holds all `N` curves of channel `j` row-major (`N × t`), in
/// group order with sizes `sizes`.
pub(crate) fn decompose_flat(
    sizes: &[usize],
    t: usize,
    channels: [&[f64]; 2],
    formula: AnovaFormula,
) -> AnovaDecomposition {
    let a = sizes.len();
    let n: usize = sizes.iter().sum();
    let nf = n as f64;
    let mut mean_overall = [vec![0.0; t], vec![0.0; t]];
    let mut mean_by_group = vec![[vec![0.0; t], vec![0.0; t]]; a];
    let mut sse = [vec![0.0; t], vec![0.0; t]];
    let mut ssa = [vec![0.0; t], vec![0.0; t]];
    let mut s2_alpha = [vec![0.0; t], vec![0.0; t]];
    let mut s2_alpha_raw = [vec![0.0; t], vec![0.0; t]];

    let sum_sq_sizes: f64 = sizes.iter().map(|&s| (s * s) as f64).sum();
    let n_star = (nf - sum_sq_sizes / nf) / (a as f64 - 1.0);

    for j in 0..2 {
        let data = channels[j];
        let mut offset = 0;
        for (i, &ni) in sizes.iter().enumerate() {
            let gm = &mut mean_by_group[i][j];
            for k in 0..ni {
                let row = &data[(offset + k) * t..(offset + k + 1) * t];
                for (acc, v) in gm.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            for (o, g) in mean_overall[j].iter_mut().zip(gm.iter()) {
                *o += g;
            }
            gm.iter_mut().for_each(|x| *x /= ni as f64);
            offset += ni;
        }
        mean_overall[j].iter_mut().for_each(|x| *x /= nf);

        let mut offset = 0;
        for (i, &ni) in sizes.iter().enumerate() {
            let gm = &mean_by_group[i][j];
            for k in 0..ni {
                let row = &data[(offset + k) * t..(offset + k + 1) * t];
                for p in 0..t {
                    let centre = match formula {
                        AnovaFormula::Printed => mean_overall[j][p],
                        AnovaFormula::Classical => gm[p],
                    };
                    let d = row[p] - centre;
                    sse[j][p] += d * d;
                }
            }
            for p in 0..t {
                let d = gm[p] - mean_overall[j][p];
                ssa[j][p] += ni as f64 * d * d;
            }
            offset += ni;
        }

        let error_df = match formula {
            AnovaFormula::Printed => nf - 1.0,
            AnovaFormula::Classical => nf - a as f64,
        };
        for p in 0..t {
            let raw = (ssa[j][p] / (a as f64 - 1.0) - sse[j][p] / error_df) / n_star;
            s2_alpha_raw[j][p] = raw;
            s2_alpha[j][p] = raw.max(S2_ALPHA_FLOOR);
        }
    }

    AnovaDecomposition {
        formula,
        group_sizes: sizes.to_vec(),
        mean_overall,
        mean_by_group,
        sse,
        ssa,
        n_star,
        s2_alpha,
        s2_alpha_raw,
    }
}

fn flatten_channels(g: &GroupedPairedSample) -> [Vec<f64>; 2] {
    let pooled = g.pooled();
    [pooled.curves_1.as_slice().to_vec(), pooled.curves_2.as_slice().to_vec()]
}

pub fn anova_decompose(g: &GroupedPairedSample, formula: AnovaFormula) -> Result<AnovaDecomposition> {
    let a = g.num_groups();
    let n = g.total();
    if a < 2 || n < a + 1 {
        return Err(Error::InsufficientSample(format!(
            "random-effects ANOVA needs A >= 2 and N >= A + 1 (A = {a}, N = {n})"
        )));
    }
    let [c1, c2] = flatten_channels(g);
    Ok(decompose_flat(&g.group_sizes(), g.grid.len(), [&c1, &c2], formula))
}

impl AnovaDecomposition {
    /// θ̂, λ̂ = SSE₁/SSE₂ and ψ̂ = s²_α,₁/s²_α,₂ from this decomposition.
    pub fn metrics(&self) -> Result<MetricEstimates> {
        let a = self.mean_by_group.len() as f64;
        let t = self.mean_overall[0].len();
        let mut theta = vec![0.0; t];
        for g in &self.mean_by_group {
            for p in 0..t {
                theta[p] += g[0][p] - g[1][p];
            }
        }
        theta.iter_mut().for_each(|x| *x /= a);
        Ok(MetricEstimates {
            theta_hat: theta,
            lambda_hat: ratio_checked(&self.sse[0], &self.sse[1], "error sum of squares")?,
            psi_hat: Some(ratio_checked(
                &self.s2_alpha[0],
                &self.s2_alpha[1],
                "random-effect variance",
            )?),
        })
    }
}

pub fn estimate_metrics_grouped(g: &GroupedPairedSample, formula: AnovaFormula) -> Result<MetricEstimates> {
    anova_decompose(g, formula)?.metrics()
}

/// Rescaled random effects whose pointwise spread over individuals equals `s_α,j`.
///
/// `â_{i,j}(t) = ȳ_j(t) − (α̂_{i,j}(t) − ȳ_j(t)) · s_α,j(t) / SD_i(α̂_{i,j}(t))`,
/// with the standard deviation taken over individuals with divisor `A − 1`.
/// Indexed `[i][j][t]`.
pub fn adjusted_random_effects(d: &AnovaDecomposition) -> Result<Vec<[Vec<f64>; 2]>> {
    let a = d.mean_by_group.len();
    let t = d.mean_overall[0].len();
    let mut out = vec![[vec![0.0; t], vec![0.0; t]]; a];
    for j in 0..2 {
        for p in 0..t {
            let m = d.mean_by_group.iter().map(|g| g[j][p]).sum::<f64>() / a as f64;
            let ss: f64 = d.mean_by_group.iter().map(|g| (g[j][p] - m) * (g[j][p] - m)).sum();
            let sd = (ss / (a as f64 - 1.0)).sqrt();
            if !(sd > 0.0) {
                return Err(Error::DegenerateSpread {
                    channel: j + 1,
                    index: p,
                });
            }
            let scale = d.s2_alpha[j][p].sqrt() / sd;
            let centre = d.mean_overall[j][p];
            for (i, g) in d.mean_by_group.iter().enumerate() {
                out[i][j][p] = centre - (g[j][p] - centre) * scale;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::{CurveMatrix, Grid};
    use approx::assert_relative_eq;

    fn sample(rows: &[Vec<f64>]) -> FunctionalSample {
        FunctionalSample::new(Grid::equispaced(rows[0].len()), CurveMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn means_and_variances() {
        assert_eq!(pointwise_mean(&sample(&[vec![0.0; 3], vec![2.0; 3]])), vec![1.0; 3]);
        assert_eq!(pointwise_mean(&sample(&[vec![1.5, -2.0]])), vec![1.5, -2.0]);
        assert_eq!(
            pointwise_mean(&sample(&[vec![1.0, 3.0], vec![2.0, 4.0], vec![3.0, 5.0]])),
            vec![2.0, 4.0]
        );
        assert_eq!(pointwise_var(&sample(&[vec![0.0], vec![2.0]])).unwrap(), vec![2.0]);
        assert_eq!(
            pointwise_var(&sample(&[vec![1.0, 2.0], vec![1.0, 2.0]])).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(pointwise_var(&sample(&[vec![1.0]])).is_err());
    }

    #[test]
    fn variance_is_translation_invariant() {
        let rows = vec![vec![0.3, 1.0, -2.0], vec![1.1, 0.2, 0.4], vec![-0.5, 0.9, 2.2]];
        let shift = [5.0, -3.0, 0.25];
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&shift).map(|(a, b)| a + b).collect())
            .collect();
        let a = pointwise_var(&sample(&rows)).unwrap();
        let b = pointwise_var(&sample(&shifted)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn paired_identities() {
        let g = Grid::equispaced(3);
        let c2 = CurveMatrix::from_rows(&[vec![0.1, 0.5, 0.9], vec![0.3, 0.2, 1.4], vec![-0.2, 0.8, 1.1]]).unwrap();
        let same = PairedFunctionalSample::new(g.clone(), c2.clone(), c2.clone()).unwrap();
        let est = estimate_metrics_paired(&same).unwrap();
        assert!(est.theta_hat.iter().all(|&x| x == 0.0));
        assert!(est.lambda_hat.iter().all(|&x| x == 1.0));

        let m2 = c2.column_means();
        let scaled: Vec<Vec<f64>> = c2
            .rows()
            .map(|r| r.iter().zip(&m2).map(|(x, m)| 2.0 * (x - m) + m).collect())
            .collect();
        let s = PairedFunctionalSample::new(g, CurveMatrix::from_rows(&scaled).unwrap(), c2).unwrap();
        for l in estimate_metrics_paired(&s).unwrap().lambda_hat {
            assert_relative_eq!(l, 4.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_denominator_variance_is_an_error() {
        let g = Grid::equispaced(2);
        let s = PairedFunctionalSample::new(
            g,
            CurveMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 2.0]]).unwrap(),
            CurveMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 2.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            estimate_metrics_paired(&s),
            Err(Error::DegenerateVariance { index: 0, .. })
        ));
    }

    fn toy_grouped() -> GroupedPairedSample {
        let g = Grid::equispaced(1);
        let mk = |a: &[f64], b: &[f64]| {
            PairedFunctionalSample::new(
                g.clone(),
                CurveMatrix::from_flat(a.len(), 1, a.to_vec()).unwrap(),
                CurveMatrix::from_flat(b.len(), 1, b.to_vec()).unwrap(),
            )
            .unwrap()
        };
        GroupedPairedSample::new(
            g.clone(),
            vec![
                mk(&[1.0, 3.0], &[0.0, 1.0]),
                mk(&[4.0, 6.0], &[2.0, 5.0]),
                mk(&[0.0, 2.0], &[1.0, 3.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn adjusted_effects_hand_oracle() {
        // Channel 1 group means 2, 5, 1 (overall 8/3); s²_α by the printed formula:
        // SSA = 2[(2-8/3)² + (5-8/3)² + (1-8/3)²] = 52/3, SSE = Σ(y - 8/3)² = 70/3,
        // n* = (6 - 12/6)/2 = 2, s²_α = (26/3 - 14/3)/2 = 2.
        // SD of group means = sqrt(13/3), scale = sqrt(2)/sqrt(13/3).
        let d = anova_decompose(&toy_grouped(), AnovaFormula::Printed).unwrap();
        assert_relative_eq!(d.n_star, 2.0);
        assert_relative_eq!(d.ssa[0][0], 52.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(d.sse[0][0], 70.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(d.s2_alpha[0][0], 2.0, max_relative = 1e-14);
        let adj = adjusted_random_effects(&d).unwrap();
        let centre = 8.0 / 3.0;
        let scale = 2.0f64.sqrt() / (13.0f64 / 3.0).sqrt();
        for (i, m) in [2.0, 5.0, 1.0].iter().enumerate() {
            assert_relative_eq!(adj[i][0][0], centre - (m - centre) * scale, max_relative = 1e-14);
        }
    }

    #[test]
    fn classical_formula_uses_within_group_ss() {
        let d = anova_decompose(&toy_grouped(), AnovaFormula::Classical).unwrap();
        // within-group SS for channel 1: 2 + 2 + 2 = 6; N - A = 3
        assert_relative_eq!(d.sse[0][0], 6.0);
        assert_relative_eq!(d.s2_alpha_raw[0][0], (26.0 / 3.0 - 2.0) / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn identical_curves_clip_random_effect_variance() {
        let g = Grid::equispaced(2);
        let pair = PairedFunctionalSample::new(
            g.clone(),
            CurveMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(),
            CurveMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(),
        )
        .unwrap();
        let grouped = GroupedPairedSample::new(g, vec![pair.clone(), pair]).unwrap();
        let d = anova_decompose(&grouped, AnovaFormula::Printed).unwrap();
        for j in 0..2 {
            assert!(d.sse[j].iter().all(|&x| x == 0.0));
            assert!(d.ssa[j].iter().all(|&x| x == 0.0));
            assert!(d.s2_alpha[j].iter().all(|&x| x == S2_ALPHA_FLOOR));
        }
        assert!(adjusted_random_effects(&d).is_err());
    }
}
