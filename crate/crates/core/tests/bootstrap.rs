use feqt::estimators::estimate_metrics_paired;
use feqt::rng::substream;
use feqt::simlab::{generate_dataset, TruthSpec};
use feqt::tost::{
    bootstrap_matched, run_tost, tost_scalar, BootstrapConfig, Decision, Design, EquivalenceBands, Metric, TostData,
};
use feqt::{CurveMatrix, Grid, PairedFunctionalSample};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn exact_mean_distribution(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut means: Vec<f64> = (0..n.pow(n as u32))
        .map(|mut code| {
            let mut s = 0.0;
            for _ in 0..n {
                s += d[code % n];
                code /= n;
            }
            s / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    means
}

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x + 1e-12) as f64 / sorted.len() as f64
}

#[test]
fn matched_draws_follow_exact_resampling_distribution() {
    let x1 = [0.9, 2.4, -0.3, 1.7];
    let x2 = [0.1, 0.5, 0.2, -0.6];
    let d: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
    let exact = exact_mean_distribution(&d);
    let grid = Grid::equispaced(1);
    let s = PairedFunctionalSample::new(
        grid,
        CurveMatrix::from_flat(4, 1, x1.to_vec()).unwrap(),
        CurveMatrix::from_flat(4, 1, x2.to_vec()).unwrap(),
    )
    .unwrap();
    let b = 20_000;
    let mut cfg = BootstrapConfig::new(Design::MatchedPairs, b, 0.05, 8);
    cfg.location_only = true;
    let draws = bootstrap_matched(&s, &cfg).unwrap();
    let mut sim = draws.theta.column(0);
    sim.sort_by(f64::total_cmp);
    let ks = exact
        .iter()
        .map(|&x| (ecdf(&sim, x) - ecdf(&exact, x)).abs())
        .fold(0.0, f64::max);
    // 0.1% Kolmogorov critical value.
    assert!(ks < 1.95 / (b as f64).sqrt(), "KS distance {ks}");
}

#[test]
fn scalar_tost_size_near_alpha_at_the_boundary() {
    let alpha = 0.05;
    let reps = 300;
    let mut rejections = 0;
    for r in 0..reps {
        let mut rng = substream(31, r);
        let x2: Vec<f64> = (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x1: Vec<f64> = x2
            .iter()
            .map(|v| v + 0.5 + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cfg = BootstrapConfig::new(Design::MatchedPairs, 400, alpha, 1000 + r);
        if tost_scalar(&x1, &x2, (-0.5, 0.5), &cfg).unwrap().decision.rejects() {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    let se = (alpha * (1.0 - alpha) / reps as f64).sqrt();
    assert!(rate <= alpha + 3.0 * se, "size {rate}");
    assert!(rate >= 0.01, "size {rate} implausibly small at the boundary");
}

#[test]
fn scalar_tost_rejects_clear_equivalence() {
    let mut rng = substream(32, 0);
    let x2: Vec<f64> = (0..40).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let x1: Vec<f64> = x2
        .iter()
        .map(|v| v + 0.05 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    for design in [Design::MatchedPairs, Design::IndependentIid] {
        let cfg = BootstrapConfig::new(design, 1000, 0.05, 4);
        let wide = tost_scalar(&x1, &x2, (-2.0, 2.0), &cfg).unwrap();
        assert_eq!(wide.decision, Decision::RejectNonequivalence, "{design:?}");
        let narrow = tost_scalar(&x1, &x2, (-1e-4, 1e-4), &cfg).unwrap();
        assert_eq!(narrow.decision, Decision::FailToReject, "{design:?}");
    }
}

fn small_grouped(seed: u64) -> feqt::GroupedPairedSample {
    let grid = Grid::equispaced(9);
    generate_dataset(&TruthSpec::breath_profile(&grid).with_design(16, 8), seed).unwrap()
}

#[test]
fn channel_swap_mirrors_every_metric() {
    let g = small_grouped(3);
    let grid = g.grid.clone();
    let eq = EquivalenceBands::cosine(&grid);
    let cfg = BootstrapConfig::new(Design::RandomEffectsMatched, 300, 0.05, 12);
    let a = run_tost(&TostData::RandomEffects(g.clone()), &cfg, &eq).unwrap();
    let b = run_tost(&TostData::RandomEffects(g.swapped()), &cfg, &eq.mirrored()).unwrap();
    for m in [Metric::Theta, Metric::Lambda, Metric::Psi] {
        let (x, y) = (a.report.metric(m).unwrap(), b.report.metric(m).unwrap());
        assert_eq!(x.decision, y.decision, "{m:?}");
        for p in 0..grid.len() {
            let (lo, hi) = (x.bands.lower_of_upper_ci[p], x.bands.upper_of_lower_ci[p]);
            let (lo2, hi2) = (y.bands.lower_of_upper_ci[p], y.bands.upper_of_lower_ci[p]);
            if m == Metric::Theta {
                assert_eq!(lo2, -hi);
                assert_eq!(hi2, -lo);
            } else {
                assert!((lo2 * hi - 1.0).abs() < 1e-10, "{m:?} at {p}");
                assert!((hi2 * lo - 1.0).abs() < 1e-10, "{m:?} at {p}");
            }
        }
    }
}

#[test]
fn bootstrap_is_seed_deterministic() {
    let g = small_grouped(4);
    let eq = EquivalenceBands::cosine(&g.grid);
    let data = TostData::RandomEffects(g);
    let cfg = BootstrapConfig::new(Design::RandomEffectsMatched, 200, 0.05, 77);
    let a = run_tost(&data, &cfg, &eq).unwrap();
    let b = run_tost(&data, &cfg, &eq).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.report, b.report);
    let mut other = cfg.clone();
    other.seed = 78;
    assert_ne!(run_tost(&data, &other, &eq).unwrap().draws, a.draws);
}

#[test]
fn breath_profile_reproduces_decision_pattern() {
    let grid = Grid::equispaced(25);
    let data = generate_dataset(&TruthSpec::breath_profile(&grid), 1).unwrap();
    let eq = EquivalenceBands::cosine(&grid);
    let cfg = BootstrapConfig::new(Design::RandomEffectsMatched, 2000, 0.05, 1);
    let report = run_tost(&TostData::RandomEffects(data), &cfg, &eq).unwrap().report;
    let theta = report.metric(Metric::Theta).unwrap();
    let lambda = report.metric(Metric::Lambda).unwrap();
    let psi = report.metric(Metric::Psi).unwrap();
    assert_eq!(theta.decision, Decision::RejectNonequivalence);
    assert_eq!(lambda.decision, Decision::FailToReject);
    assert_eq!(lambda.noninferiority, Some(Decision::RejectNonequivalence));
    assert_eq!(psi.decision, Decision::FailToReject);
    assert_eq!(report.decision, Decision::FailToReject);
}

fn paired(rows: usize, t: usize, values: &[f64]) -> PairedFunctionalSample {
    let grid = Grid::equispaced(t);
    let c1 = CurveMatrix::from_flat(rows, t, values[..rows * t].to_vec()).unwrap();
    let c2 = CurveMatrix::from_flat(rows, t, values[rows * t..].to_vec()).unwrap();
    PairedFunctionalSample::new(grid, c1, c2).unwrap()
}

proptest! {
    #[test]
    fn paired_estimators_transform_correctly(
        values in prop::collection::vec(-5.0f64..5.0, 2 * 5 * 3),
        shift in -3.0f64..3.0,
        scale in 0.2f64..4.0,
    ) {
        let s = paired(5, 3, &values);
        let base = estimate_metrics_paired(&s).unwrap();
        let c1 = CurveMatrix::from_flat(5, 3, s.curves_1.as_slice().iter().map(|v| scale * v + shift).collect()).unwrap();
        let moved = PairedFunctionalSample::new(s.grid.clone(), c1, s.curves_2.clone()).unwrap();
        let est = estimate_metrics_paired(&moved).unwrap();
        let m1 = s.curves_1.column_means();
        for p in 0..3 {
            let expect_theta = base.theta_hat[p] + (scale - 1.0) * m1[p] + shift;
            prop_assert!((est.theta_hat[p] - expect_theta).abs() < 1e-9);
            prop_assert!((est.lambda_hat[p] / base.lambda_hat[p] / (scale * scale) - 1.0).abs() < 1e-9);
        }
        let swapped = estimate_metrics_paired(&s.swapped()).unwrap();
        for p in 0..3 {
            prop_assert_eq!(swapped.theta_hat[p], -base.theta_hat[p]);
            prop_assert!((swapped.lambda_hat[p] * base.lambda_hat[p] - 1.0).abs() < 1e-12);
        }
    }
}
