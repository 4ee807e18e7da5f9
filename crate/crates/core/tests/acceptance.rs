//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use feqt::bayes::geweke::{geweke_test, GewekeConfig};
use feqt::bayes::{
    calibrate_prior_scale, posterior_equivalence_prob, prior_equivalence_prob, run_mwg, simultaneous_bands, HyperPrior,
    MvnAccuracy, MwgConfig, PriorSpec,
};
use feqt::estimators::{anova_decompose, AnovaFormula};
use feqt::rng::substream;
use feqt::simlab::{
    boundary_violation_scenarios, generate_dataset, run_study, FrequentistArm, Method, ScenarioSequence, StudyConfig,
    TruthSpec, WithinCorrelation,
};
use feqt::tost::{tost_scalar, BootstrapConfig, Design, EquivalenceBands, Metric};
use feqt::{make_cosine_bands, BandKind, CurveMatrix, Grid, GroupedPairedSample, PairedFunctionalSample};
use rand::Rng;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

const ALPHA: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn theta_study(
    groups: usize,
    per_group: usize,
    keep: &[usize],
    replicates: usize,
    b: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let grid = Grid::equispaced(25);
    let eq = EquivalenceBands::cosine(&grid);
    let base = TruthSpec::breath_profile(&grid).with_design(groups, per_group);
    let full = boundary_violation_scenarios(&base, &eq.theta, Metric::Theta, 9, 0).unwrap();
    let seq = ScenarioSequence {
        scenarios: keep.iter().map(|&k| full.scenarios[k - 1].clone()).collect(),
        ..full
    };
    let cfg = StudyConfig {
        replicates,
        seed,
        frequentist: Some(FrequentistArm {
            bootstrap: BootstrapConfig::new(Design::RandomEffectsMatched, b, ALPHA, seed),
            bands: eq,
        }),
        bayesian: None,
    };
    let res = run_study(&seq, &cfg).unwrap();
    (1..=keep.len())
        .map(|s| {
            let r = res.rate(s, Method::Frequentist).unwrap();
            assert_eq!(r.errors, 0, "engine errors in scenario {}", keep[s - 1]);
            (r.rate, r.std_error)
        })
        .collect()
}

fn iut_size_bound() -> Outcome {
    let (rate, _) = theta_study(10, 10, &[1], 300, 500, 101)[0];
    let se = (ALPHA * (1.0 - ALPHA) / 300.0).sqrt();
    let bound = ALPHA + 3.0 * se;
    outcome(rate <= bound, format!("size {rate:.4} <= {bound:.4}"))
}

fn size_approach() -> Outcome {
    let r = theta_study(20, 20, &[1, 9], 200, 1000, 202);
    let (s1, s9) = (r[0].0, r[1].0);
    let pass = (0.02..=0.10).contains(&s9) && s9 > s1;
    outcome(
        pass,
        format!("scenario 9 size {s9:.4} in [0.02, 0.10], scenario 1 size {s1:.4}"),
    )
}

fn prior_calibration() -> Outcome {
    let grid = Grid::equispaced(25);
    let kappa = make_cosine_bands(&grid, BandKind::Additive);
    let acc = MvnAccuracy::default();
    let cal = calibrate_prior_scale(0.3, &kappa, 0.01, &acc).unwrap();
    let p = prior_equivalence_prob(0.3, 0.1, &kappa, &acc).unwrap();
    let pass = (0.08..=0.12).contains(&cal.s2) && (p.prob - 0.01).abs() <= 0.003;
    outcome(
        pass,
        format!(
            "s2 {:.4} in [0.08, 0.12], p(0.1) {:.5} within 0.003 of 0.01",
            cal.s2, p.prob
        ),
    )
}

fn extreme_tail() -> Outcome {
    let grid = Grid::equispaced(25);
    let zeta = make_cosine_bands(&grid, BandKind::Multiplicative);
    let acc = MvnAccuracy {
        abs_tol: 0.0,
        rel_tol: 0.05,
        ..Default::default()
    };
    let p = prior_equivalence_prob(0.1, 5.0, &zeta, &acc).unwrap().prob;
    let reference = 5e-8;
    let pass = p < 1e-6 && p > reference / 5.0 && p < reference * 5.0;
    outcome(pass, format!("p {p:.3e} within x5 of {reference:.0e} and below 1e-6"))
}

/// Lower and upper `α`-quantiles of the exact bootstrap distribution of the
/// mean of `d`, over all `n^n` equally likely resamples.
fn enumerated_quantiles(d: &[f64], alpha: f64) -> (f64, f64) {
    let n = d.len();
    let total = n.pow(n as u32);
    let mut means: Vec<f64> = (0..total)
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
    let w = 1.0 / total as f64;
    let lower = (0..total)
        .find(|&k| (k + 1) as f64 * w >= alpha - 1e-12)
        .map(|k| means[k])
        .unwrap();
    let upper = (0..total)
        .rev()
        .find(|&k| (total - k) as f64 * w >= alpha - 1e-12)
        .map(|k| means[k])
        .unwrap();
    (lower, upper)
}

fn bootstrap_enumeration() -> Outcome {
    let x1 = [1.3, 0.4, 2.9];
    let x2 = [0.2, 0.7, 1.1];
    let d: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
    let hat = d.iter().sum::<f64>() / 3.0;
    let (q_lo, q_hi) = enumerated_quantiles(&d, ALPHA);
    let cfg = BootstrapConfig::new(Design::MatchedPairs, 100_000, ALPHA, 55);
    let r = tost_scalar(&x1, &x2, (-10.0, 10.0), &cfg).unwrap();
    let (lo, hi) = (2.0 * hat - q_hi, 2.0 * hat - q_lo);
    let err = (r.lower_of_upper_ci - lo).abs().max((r.upper_of_lower_ci - hi).abs());
    outcome(
        err <= 0.01,
        format!("max endpoint error {err:.2e} <= 0.01 (L {lo:.4}, U {hi:.4})"),
    )
}

fn random_grouped(rng: &mut impl Rng, t: usize) -> GroupedPairedSample {
    let grid = Grid::equispaced(t);
    let a = rng.random_range(2..7);
    let groups = (0..a)
        .map(|_| {
            let n = rng.random_range(1..9);
            let shift: f64 = rng.random_range(-2.0..2.0);
            let mut draw = || -> CurveMatrix {
                let v: Vec<f64> = (0..n * t).map(|_| shift + rng.random_range(-1.0..1.0)).collect();
                CurveMatrix::from_flat(n, t, v).unwrap()
            };
            let c1 = draw();
            let c2 = draw();
            PairedFunctionalSample::new(grid.clone(), c1, c2).unwrap()
        })
        .collect();
    GroupedPairedSample::new(grid, groups).unwrap()
}

/// Sums of squares as halved pairwise squared differences.
fn pairwise_anova(g: &GroupedPairedSample, j: usize, p: usize) -> (f64, f64, f64, f64, f64) {
    let cols: Vec<Vec<f64>> = g.groups.iter().map(|s| s.channel(j).column(p)).collect();
    let all: Vec<f64> = cols.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let a = cols.len() as f64;
    let mut sst = 0.0;
    for x in &all {
        for y in &all {
            sst += (x - y).powi(2);
        }
    }
    sst /= 2.0 * n;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let mut ssa = 0.0;
    let mut sse_within = 0.0;
    for (i, ci) in cols.iter().enumerate() {
        for (k, ck) in cols.iter().enumerate() {
            ssa += (ci.len() * ck.len()) as f64 * (means[i] - means[k]).powi(2);
        }
        let mut w = 0.0;
        for x in ci {
            for y in ci {
                w += (x - y).powi(2);
            }
        }
        sse_within += w / (2.0 * ci.len() as f64);
    }
    ssa /= 2.0 * n;
    let mut sq = 0.0;
    for c in &cols {
        sq += (c.len() * c.len()) as f64;
    }
    let n_star = (n - sq / n) / (a - 1.0);
    let s2 = (ssa / (a - 1.0) - sst / (n - 1.0)) / n_star;
    (sst, ssa, sse_within, n_star, s2)
}

fn anova_oracle() -> Outcome {
    let mut rng = substream(606, 0);
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g = loop {
            let g = random_grouped(&mut rng, 4);
            if g.total() > g.num_groups() {
                break g;
            }
        };
        let printed = anova_decompose(&g, AnovaFormula::Printed).unwrap();
        let classical = anova_decompose(&g, AnovaFormula::Classical).unwrap();
        for j in 0..2 {
            for p in 0..4 {
                let (sst, ssa, ssw, n_star, s2) = pairwise_anova(&g, j, p);
                worst = worst
                    .max(rel(printed.sse[j][p], sst))
                    .max(rel(printed.ssa[j][p], ssa))
                    .max(rel(classical.sse[j][p], ssw))
                    .max(rel(printed.n_star, n_star))
                    .max(rel(printed.s2_alpha_raw[j][p], s2));
            }
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max relative error {worst:.2e} over 20 instances"),
    )
}

fn self_consistent_truth(grid: &Grid) -> TruthSpec {
    let mut truth = TruthSpec::breath_profile(grid);
    let t = grid.len();
    truth.within_correlation = WithinCorrelation::Independent;
    truth.mu[0] = truth.mu[1].clone();
    truth.s2_eps = [vec![0.02; t], vec![0.02; t]];
    truth.s2_alpha = [vec![0.01; t], vec![0.01; t]];
    truth.rho_eps = vec![0.8; t];
    truth
}

fn mcmc_self_consistency(keep: &mut Option<feqt::bayes::PosteriorDraws>) -> Outcome {
    let grid = Grid::equispaced(25);
    let truth = self_consistent_truth(&grid);
    let data = generate_dataset(&truth, 3).unwrap();
    let prior = PriorSpec::default_for(&grid);
    let cfg = MwgConfig::new(3, 3000, 1000, 5, 20);
    let draws = run_mwg(&data, &prior, &cfg).unwrap();
    let max_rhat = draws.diagnostics.max_rhat;
    let lam = draws.metric(Metric::Lambda);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in 0..grid.len() {
        let med = feqt::stats::median(&lam.column(p));
        lo = lo.min(med);
        hi = hi.max(med);
    }
    let eq = EquivalenceBands::cosine(&grid);
    let p_theta = posterior_equivalence_prob(&draws, &eq).unwrap().get(Metric::Theta);
    let pass = max_rhat < 1.1 && lo >= 0.8 && hi <= 1.25 && p_theta >= 0.95;
    *keep = Some(draws);
    outcome(
        pass,
        format!("max R-hat {max_rhat:.3}, lambda medians in [{lo:.3}, {hi:.3}], P(theta) {p_theta:.4}"),
    )
}

fn prior_recovery() -> Outcome {
    let grid = Grid::equispaced(3);
    let mut prior = PriorSpec::default_for(&grid);
    for c in [&mut prior.mean, &mut prior.error_variance, &mut prior.effect_variance] {
        c.scale = 0.5;
    }
    prior.error_variance.range = 0.3;
    prior.effect_variance.range = 0.3;
    prior.hyper = HyperPrior::Normal { mean: 0.0, var: 1.0 };
    let cfg = GewekeConfig {
        prior,
        group_sizes: vec![2, 2, 2, 2, 2, 3],
        cycles: 2000,
        prior_draws: 20_000,
        batches: 20,
        mh_steps: 3,
        tune_sweeps: 200,
        seed: 11,
    };
    let z = geweke_test(&cfg).unwrap();
    let worst = z.iter().max_by(|a, b| a.z.abs().total_cmp(&b.z.abs())).unwrap();
    outcome(
        worst.z.abs() < 4.0,
        format!("max |z| {:.2} ({}) over {} scalars", worst.z.abs(), worst.name, z.len()),
    )
}

fn closed_fraction_inside(draws: &CurveMatrix, lower: &[f64], upper: &[f64]) -> f64 {
    let hits = draws
        .rows()
        .filter(|r| {
            r.iter()
                .zip(lower.iter().zip(upper))
                .all(|(x, (l, u))| l <= x && x <= u)
        })
        .count();
    hits as f64 / draws.nrows() as f64
}

fn band_coverage(posterior: &CurveMatrix) -> Outcome {
    let mut rng = substream(909, 0);
    let rough = CurveMatrix::from_flat(
        2000,
        25,
        (0..50_000)
            .map(|_| {
                let u: f64 = rng.random_range(0.0..1.0);
                (u * 10.0).powi(3) - 0.5
            })
            .collect(),
    )
    .unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, draws) in [("posterior", posterior), ("heavy-tailed", &rough)] {
        for coverage in [0.90, 0.95] {
            let band = simultaneous_bands(draws, coverage).unwrap();
            let inside = closed_fraction_inside(draws, &band.lower, &band.upper);
            pass &= inside >= coverage && (inside - band.achieved_coverage).abs() < 1e-12;
            notes.push(format!("{name} {coverage}: {inside:.4}"));
        }
    }
    outcome(pass, notes.join(", "))
}

fn run_feqt(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_feqt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FEQT_SEED")
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("curves.csv");
    let gen = root.path().join("gen");
    let code = run_feqt(
        &[
            "generate",
            "--seed",
            "5",
            "--groups",
            "12",
            "--per-group",
            "5",
            "--grid",
            "9",
            "--output",
            data.to_str().unwrap(),
        ],
        &gen,
    );
    if code != 0 {
        return outcome(false, format!("generate exited {code}"));
    }
    let d = data.to_str().unwrap();
    let modes: Vec<(&str, Vec<&str>)> = vec![
        (
            "generate",
            vec![
                "generate",
                "--seed",
                "5",
                "--groups",
                "12",
                "--per-group",
                "5",
                "--grid",
                "9",
            ],
        ),
        ("tost", vec!["tost", "--data", d, "--replicates", "300", "--seed", "9"]),
        (
            "bayes",
            vec![
                "bayes",
                "--data",
                d,
                "--chains",
                "2",
                "--iters",
                "700",
                "--burnin",
                "200",
                "--thin",
                "5",
                "--seed",
                "9",
                "--export-draws",
            ],
        ),
        (
            "simulate",
            vec![
                "simulate",
                "--scenarios",
                "size-theta",
                "--replicates",
                "50",
                "--count",
                "3",
                "--bootstrap-replicates",
                "200",
                "--groups",
                "4",
                "--per-group",
                "4",
                "--grid",
                "7",
                "--seed",
                "9",
            ],
        ),
        ("bands", vec!["bands", "--grid", "9"]),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    let mut run_twice = |name: &str, args: &[&str]| -> std::path::PathBuf {
        let a = root.path().join(format!("{name}-a"));
        let b = root.path().join(format!("{name}-b"));
        let (ca, cb) = (run_feqt(args, &a), run_feqt(args, &b));
        let same = ca == cb && ca != 1 && dir_bytes(&a) == dir_bytes(&b) && !dir_bytes(&a).is_empty();
        pass &= same;
        notes.push(format!("{name} {}", if same { "identical" } else { "differs" }));
        a
    };
    let mut bayes_dir = None;
    for (name, args) in &modes {
        let dir = run_twice(name, args);
        if *name == "bayes" {
            bayes_dir = Some(dir);
        }
    }
    let bayes_dir = bayes_dir.unwrap();
    let draws = bayes_dir.join("bayes_draws.csv");
    let report = bayes_dir.join("bayes.json");
    run_twice(
        "bands-draws",
        &["bands", "--grid", "9", "--draws", draws.to_str().unwrap()],
    );
    run_twice("report", &["report", "--input", report.to_str().unwrap()]);
    outcome(pass, notes.join(", "))
}

fn main() {
    let mut posterior = None;
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        results.push((id, name, o, t0.elapsed().as_secs_f64()));
        let (id, name, o, secs) = results.last().unwrap();
        println!(
            "{} [{id}] {name}: {} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    };
    run(1, "IUT size bound", &mut iut_size_bound);
    run(2, "size approaches alpha", &mut size_approach);
    run(3, "prior calibration", &mut prior_calibration);
    run(4, "extreme-tail prior probability", &mut extreme_tail);
    run(5, "bootstrap vs exhaustive enumeration", &mut bootstrap_enumeration);
    run(6, "ANOVA pairwise oracle", &mut anova_oracle);
    run(7, "MCMC self-consistency", &mut || {
        mcmc_self_consistency(&mut posterior)
    });
    run(8, "Geweke prior recovery", &mut prior_recovery);
    let theta = posterior
        .as_ref()
        .map(|d| d.theta.clone())
        .unwrap_or_else(|| CurveMatrix::zeros(0, 25));
    run(9, "simultaneous band coverage", &mut || band_coverage(&theta));
    run(10, "CLI determinism", &mut cli_determinism);
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
