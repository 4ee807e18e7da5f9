use feqt::simlab::{
    boundary_violation_scenarios, generate_dataset, interior_scenarios, run_study, FrequentistArm, Method,
    ScenarioSequence, StudyConfig, TruthSpec, WithinCorrelation,
};
use feqt::tost::{BootstrapConfig, Design, EquivalenceBands, Metric};
use feqt::{BandKind, BandPair, Grid};

fn study(seq: &ScenarioSequence, bands: EquivalenceBands, replicates: usize, seed: u64) -> Vec<f64> {
    let cfg = StudyConfig {
        replicates,
        seed,
        frequentist: Some(FrequentistArm {
            bootstrap: BootstrapConfig::new(Design::RandomEffectsMatched, 200, 0.05, 0),
            bands,
        }),
        bayesian: None,
    };
    let res = run_study(seq, &cfg).unwrap();
    (1..=seq.scenarios.len())
        .map(|s| res.rate(s, Method::Frequentist).unwrap().rate)
        .collect()
}

fn small_base(grid: &Grid) -> TruthSpec {
    TruthSpec::breath_profile(grid).with_design(8, 6)
}

#[test]
fn dataset_moments_match_truth() {
    let grid = Grid::equispaced(5);
    let mut truth = TruthSpec::breath_profile(&grid).with_design(200, 200);
    truth.mu = [vec![1.0, -2.0, 0.5, 0.0, 3.0], vec![0.0; 5]];
    truth.s2_eps = [vec![1.0; 5], vec![2.0; 5]];
    truth.s2_alpha = [vec![0.05; 5], vec![0.1; 5]];
    truth.within_correlation = WithinCorrelation::Matern { range: 0.3 };
    let data = generate_dataset(&truth, 9).unwrap();
    let pooled = data.pooled();
    for j in 0..2 {
        let c = pooled.channel(j);
        let (mean, var) = (c.column_means(), c.column_variances());
        for p in 0..5 {
            let total = truth.s2_eps[j][p] + truth.s2_alpha[j][p];
            let se = (truth.s2_alpha[j][p] / 200.0 + truth.s2_eps[j][p] / 40_000.0).sqrt();
            assert!((mean[p] - truth.mu[j][p]).abs() < 3.0 * se, "channel {j} mean at {p}");
            assert!((var[p] / total - 1.0).abs() < 0.1, "channel {j} variance at {p}");
        }
    }
}

#[test]
fn frequentist_study_is_bit_reproducible() {
    let grid = Grid::equispaced(7);
    let eq = EquivalenceBands::cosine(&grid);
    let seq = boundary_violation_scenarios(&small_base(&grid), &eq.theta, Metric::Theta, 3, 0).unwrap();
    let cfg = StudyConfig {
        replicates: 50,
        seed: 4,
        frequentist: Some(FrequentistArm {
            bootstrap: BootstrapConfig::new(Design::RandomEffectsMatched, 150, 0.05, 0),
            bands: eq,
        }),
        bayesian: None,
    };
    let a = run_study(&seq, &cfg).unwrap();
    let b = run_study(&seq, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.rows.len(), 3);
}

#[test]
fn wide_bands_always_reject_and_displaced_bands_never_do() {
    let grid = Grid::equispaced(7);
    let eq = EquivalenceBands::cosine(&grid);
    let seq = interior_scenarios(&small_base(&grid), &eq.theta, Metric::Theta, 2).unwrap();
    let mut wide = eq.clone();
    wide.theta = BandPair::constant(&grid, -100.0, 100.0, BandKind::Additive).unwrap();
    assert!(study(&seq, wide, 50, 1).iter().all(|&r| r == 1.0));
    let mut away = eq;
    away.theta = BandPair::constant(&grid, 5.0, 6.0, BandKind::Additive).unwrap();
    assert!(study(&seq, away, 50, 1).iter().all(|&r| r == 0.0));
}

#[test]
fn power_grows_toward_the_band_midline() {
    let grid = Grid::equispaced(7);
    let eq = EquivalenceBands::cosine(&grid);
    let seq = interior_scenarios(&small_base(&grid).with_design(12, 10), &eq.theta, Metric::Theta, 3).unwrap();
    let r = study(&seq, eq, 100, 2);
    let se = |p: f64| (p * (1.0 - p) / 100.0).sqrt().max(0.01);
    assert!(r[1] + se(r[1]) >= r[0], "{r:?}");
    assert!(r[2] + se(r[2]) >= r[1], "{r:?}");
    assert!(r[2] > r[0], "{r:?}");
}
