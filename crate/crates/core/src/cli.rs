//! The `feqt` command line.
//!
//! Every mode writes its artifacts into `--out` (default `feqt-out`) as
//! `<mode>.json`, `<mode>.csv` and `<mode>.svg`, filtered by `--emit`.
//!
//! A configuration file (`--config FILE`) holds `key = value` lines, where
//! each key is a long flag name of the chosen mode (`alpha = 0.05`,
//! `location-only = true`) plus an optional `mode = tost|bayes|...`; `#`
//! starts a comment. Flags on the command line override the file. The seed
//! falls back to the `FEQT_SEED` environment variable, then to 1.
//!
//! Exit status: 0 on success, 2 when a test ran but did not establish
//! equivalence, 1 on any error (printed as `error[CODE]: message`).

use crate::bayes::{run_mwg, simultaneous_bands_for, MwgConfig, PriorSpec};
use crate::error::{Error, Result};
use crate::estimators::AnovaFormula;
use crate::fdata::{Grid, GroupedPairedSample};
use crate::io::{read_curves, read_draws, read_json, write_curves, CurveData};
use crate::report::{bayes_report, draws_csv, emit_report, BandsReport, BayesSettings, EmitFlags, Report};
use crate::simlab::{
    boundary_violation_scenarios, generate_dataset, interior_scenarios, run_study, BayesianArm, FrequentistArm,
    StudyConfig, TruthSpec,
};
use crate::tost::{run_tost, BootstrapConfig, Decision, Design, EquivalenceBands, Metric, TostData};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

pub const SEED_ENV: &str = "FEQT_SEED";
const DEFAULT_SEED: u64 = 1;
const FEW_REPLICATES: usize = 1000;

fn warn_few_replicates(b: usize) {
    if b < FEW_REPLICATES {
        log::warn!("{b} bootstrap replicates; tail quantiles are noisy below {FEW_REPLICATES}");
    }
}
const MODES: [&str; 6] = ["tost", "bayes", "simulate", "bands", "report", "generate"];

#[derive(Debug, Parser)]
#[command(name = "feqt", version, about = "Equivalence testing for functional data")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Debug, Subcommand)]
enum Mode {
    /// Bootstrap TOST on a curve file (or the synthetic breath profile).
    Tost(TostArgs),
    /// Bayesian Gaussian-process test on a grouped curve file.
    Bayes(BayesArgs),
    /// Empirical size or power over a scenario sequence.
    Simulate(SimulateArgs),
    /// Equivalence bands, plus simultaneous bands from a draws file.
    Bands(BandsArgs),
    /// Re-emit CSV and SVG from a saved JSON report.
    Report(ReportArgs),
    /// Write a synthetic breath-profile curve file.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for all randomness; falls back to FEQT_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "feqt-out")]
    out: PathBuf,
    /// Comma-separated subset of csv,json,svg.
    #[arg(long, default_value = "csv,json,svg")]
    emit: String,
}

#[derive(Debug, Args)]
struct Synthetic {
    /// Groups in the synthetic design.
    #[arg(long, default_value_t = 16)]
    groups: usize,
    /// Pairs per group in the synthetic design.
    #[arg(long, default_value_t = 28)]
    per_group: usize,
    /// Equispaced grid points in the synthetic design.
    #[arg(long, default_value_t = 25)]
    grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    Auto,
    Independent,
    Matched,
    RandomEffects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormulaArg {
    Printed,
    Classical,
}

#[derive(Debug, Args)]
struct TostArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    synthetic: Synthetic,
    /// Curve file; without it the synthetic breath profile is used.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Second single-channel file for the independent design.
    #[arg(long)]
    data2: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DesignArg::Auto)]
    design: DesignArg,
    /// Pointwise level of each one-sided test.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, value_enum, default_value_t = FormulaArg::Printed)]
    anova_formula: FormulaArg,
    /// Test the mean difference only.
    #[arg(long)]
    location_only: bool,
    /// Equivalence bands as JSON (default: cosine bands).
    #[arg(long)]
    bands: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BayesArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    synthetic: Synthetic,
    /// Grouped curve file; without it the synthetic breath profile is used.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Posterior probability needed to declare equivalence.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 3)]
    chains: usize,
    #[arg(long, default_value_t = 10500)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    burnin: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Nominal coverage of the simultaneous bands.
    #[arg(long, default_value_t = 0.95)]
    coverage: f64,
    /// Prior specification as JSON (default: calibrated defaults on the data grid).
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Equivalence bands as JSON (default: cosine bands).
    #[arg(long)]
    bands: Option<PathBuf>,
    /// Also write the pooled draws to `bayes_draws.csv`.
    #[arg(long)]
    export_draws: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Frequentist,
    Bayesian,
    Both,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    synthetic: Synthetic,
    /// `size-<metric>` (boundary violations) or `power-<metric>` (interior truths).
    #[arg(long, default_value = "size-theta")]
    scenarios: String,
    /// Simulated datasets per scenario.
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 9)]
    count: usize,
    /// Grid index pinned on the band in boundary scenarios.
    #[arg(long, default_value_t = 0)]
    violation_index: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Frequentist)]
    method: MethodArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replicates per simulated dataset.
    #[arg(long, default_value_t = 500)]
    bootstrap_replicates: usize,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    chains: usize,
    #[arg(long, default_value_t = 1500)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    burnin: usize,
    #[arg(long, default_value_t = 5)]
    thin: usize,
}

#[derive(Debug, Args)]
struct BandsArgs {
    #[command(flatten)]
    common: Common,
    /// Equispaced grid points.
    #[arg(long, default_value_t = 25)]
    grid: usize,
    /// Draws file for simultaneous bands.
    #[arg(long)]
    draws: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    coverage: f64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// JSON report written by another mode.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    synthetic: Synthetic,
    /// Curve file to write (default: `<out>/curves.csv`).
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parse `key = value` lines.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: k + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key.starts_with('-') {
            return Err(Error::Parse {
                line: k + 1,
                message: format!("invalid key `{}`", key),
            });
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

const BOOLEAN_FLAGS: [&str; 2] = ["location-only", "export-draws"];

/// Merge the config file into argv: `[prog, mode, config flags…, user flags…]`.
fn assemble_argv(args: &[String]) -> Result<Vec<String>> {
    let prog = args.first().cloned().unwrap_or_else(|| "feqt".into());
    let mut rest: Vec<String> = Vec::new();
    let mut config: Option<PathBuf> = None;
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it
                .next()
                .ok_or_else(|| Error::InvalidConfig("--config needs a file".into()))?;
            config = Some(PathBuf::from(p));
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a.clone());
        }
    }
    let entries = match &config {
        Some(p) => parse_config(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let cfg_mode = entries.iter().rev().find(|(k, _)| k == "mode").map(|(_, v)| v.clone());
    let user_mode = rest.first().filter(|a| MODES.contains(&a.as_str())).cloned();
    let mode = match (&user_mode, &cfg_mode) {
        (Some(u), Some(c)) if u != c => {
            return Err(Error::InvalidConfig(format!(
                "command `{u}` conflicts with `mode = {c}` in the config file"
            )))
        }
        (Some(u), _) => u.clone(),
        (None, Some(c)) => c.clone(),
        (None, None) => {
            // Let clap report help, version or the missing subcommand.
            return Ok(std::iter::once(prog).chain(rest).collect());
        }
    };
    if user_mode.is_some() {
        rest.remove(0);
    }
    let mut argv = vec![prog, mode];
    for (k, v) in entries.into_iter().filter(|(k, _)| k != "mode") {
        if BOOLEAN_FLAGS.contains(&k.as_str()) {
            match v.as_str() {
                "true" => argv.push(format!("--{k}")),
                "false" => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "`{k}` must be true or false, found `{v}`"
                    )))
                }
            }
        } else {
            argv.push(format!("--{k}"));
            argv.push(v);
        }
    }
    argv.extend(rest);
    Ok(argv)
}

/// Run the CLI on `args` (including the program name); returns the exit code.
pub fn run_cli(args: &[String]) -> i32 {
    let argv = match assemble_argv(args) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.mode) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::Decided(d)) => {
            if d.rejects() {
                0
            } else {
                2
            }
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error[{}]: {e}", e.code());
    1
}

enum Outcome {
    Done,
    Decided(Decision),
}

fn dispatch(mode: Mode) -> Result<Outcome> {
    match mode {
        Mode::Tost(a) => tost(a),
        Mode::Bayes(a) => bayes(a),
        Mode::Simulate(a) => simulate(a),
        Mode::Bands(a) => bands(a),
        Mode::Report(a) => report(a),
        Mode::Generate(a) => generate(a),
    }
}

impl Common {
    fn seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV} must be an unsigned integer, found `{v}`"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    fn emit(&self) -> Result<EmitFlags> {
        let mut f = EmitFlags {
            csv: false,
            json: false,
            svg: false,
        };
        for tok in self.emit.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match tok {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(Error::InvalidConfig(format!("unknown emit format `{other}`"))),
            }
        }
        Ok(f)
    }

    fn write(&self, report: &Report) -> Result<()> {
        for p in emit_report(report, self.emit()?, &self.out)? {
            println!("wrote {}", p.display());
        }
        Ok(())
    }
}

impl Synthetic {
    fn truth(&self) -> Result<TruthSpec> {
        if self.grid < 2 {
            return Err(Error::InvalidConfig("synthetic grid needs at least 2 points".into()));
        }
        Ok(TruthSpec::breath_profile(&Grid::equispaced(self.grid)).with_design(self.groups, self.per_group))
    }

    fn dataset(&self, seed: u64) -> Result<GroupedPairedSample> {
        log::info!(
            "no data file given; using the synthetic breath profile ({} groups x {} pairs, T = {})",
            self.groups,
            self.per_group,
            self.grid
        );
        generate_dataset(&self.truth()?, seed)
    }
}

fn load_bands(path: Option<&Path>, grid: &Grid) -> Result<EquivalenceBands> {
    let Some(p) = path else {
        return Ok(EquivalenceBands::cosine(grid));
    };
    let bands = match read_json::<Report>(p) {
        Ok(Report::Bands(b)) => b.bands,
        _ => read_json::<EquivalenceBands>(p)?,
    };
    for m in [Metric::Theta, Metric::Lambda, Metric::Psi] {
        if bands.for_metric(m).grid != *grid {
            return Err(Error::InvalidGrid(format!(
                "{} equivalence bands use a different grid than the data",
                m.name()
            )));
        }
    }
    Ok(bands)
}

fn tost(a: TostArgs) -> Result<Outcome> {
    let seed = a.common.seed()?;
    let data = match &a.data {
        Some(p) => read_curves(p)?,
        None => CurveData::Grouped(a.synthetic.dataset(seed)?),
    };
    let second = a.data2.as_deref().map(read_curves).transpose()?;
    let tdata = match (data, second) {
        (CurveData::Single(s1), Some(CurveData::Single(s2))) => TostData::Independent(s1, s2),
        (CurveData::Single(_), None) => {
            return Err(Error::InvalidConfig(
                "single-channel file needs --data2 with the second sample".into(),
            ))
        }
        (_, Some(_)) => {
            return Err(Error::InvalidConfig(
                "--data2 applies only to two single-channel files".into(),
            ))
        }
        (CurveData::Paired(p), None) => TostData::Matched(p),
        (CurveData::Grouped(g), None) => match a.design {
            DesignArg::Matched => TostData::Matched(g.pooled()),
            _ => TostData::RandomEffects(g),
        },
    };
    let design = tdata.design();
    let wanted = match a.design {
        DesignArg::Auto => design,
        DesignArg::Independent => Design::IndependentIid,
        DesignArg::Matched => Design::MatchedPairs,
        DesignArg::RandomEffects => Design::RandomEffectsMatched,
    };
    if wanted != design {
        return Err(Error::InvalidConfig(format!(
            "design {wanted:?} does not fit the data layout ({design:?})"
        )));
    }
    warn_few_replicates(a.replicates);
    let mut cfg = BootstrapConfig::new(design, a.replicates, a.alpha, seed);
    cfg.anova_formula = match a.anova_formula {
        FormulaArg::Printed => AnovaFormula::Printed,
        FormulaArg::Classical => AnovaFormula::Classical,
    };
    cfg.location_only = a.location_only;
    let eq = load_bands(a.bands.as_deref(), tdata.grid())?;
    let outcome = run_tost(&tdata, &cfg, &eq)?;
    let r = outcome.report;
    for m in &r.metrics {
        println!(
            "{}: {:?} ({} violation(s){})",
            m.metric.name(),
            m.decision,
            m.violations.len(),
            match m.noninferiority {
                Some(d) => format!(", noninferiority {d:?}"),
                None => String::new(),
            }
        );
    }
    println!("overall: {:?}", r.decision);
    let decision = r.decision;
    a.common.write(&Report::Tost(r))?;
    Ok(Outcome::Decided(decision))
}

fn bayes(a: BayesArgs) -> Result<Outcome> {
    let seed = a.common.seed()?;
    let data = match &a.data {
        Some(p) => match read_curves(p)? {
            CurveData::Grouped(g) => g,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "the Bayesian model needs grouped pairs; the file holds {}",
                    other.layout()
                )))
            }
        },
        None => a.synthetic.dataset(seed)?,
    };
    let mut prior = match &a.prior {
        Some(p) => read_json::<PriorSpec>(p)?,
        None => PriorSpec::default_for(&data.grid),
    };
    if let Some(g) = a.gamma {
        prior.gamma = g;
    }
    let eq = load_bands(a.bands.as_deref(), &data.grid)?;
    let mcmc = MwgConfig::new(a.chains, a.iters, a.burnin, a.thin, seed);
    let draws = run_mwg(&data, &prior, &mcmc)?;
    let settings = BayesSettings {
        chains: a.chains,
        iters: a.iters,
        burnin: a.burnin,
        thin: a.thin,
        seed,
        gamma: prior.gamma,
        coverage: a.coverage,
    };
    let r = bayes_report(&draws, &eq, settings)?;
    println!("retained draws: {}", r.draws);
    for m in &r.metrics {
        println!("{}: P = {:.4} -> {:?}", m.metric.name(), m.probability, m.decision);
    }
    if let Some(p) = r.metric(Metric::Lambda).and_then(|m| m.noninferiority_probability) {
        println!("lambda noninferiority: P = {p:.4}");
    }
    if r.diagnostics.rhat_warning {
        println!("warning: max split R-hat {:.3}", r.diagnostics.max_rhat);
    }
    println!("overall: {:?}", r.decision);
    let decision = r.decision;
    a.common.write(&Report::Bayes(r))?;
    if a.export_draws {
        let path = a.common.out.join("bayes_draws.csv");
        std::fs::write(&path, draws_csv(&draws))?;
        println!("wrote {}", path.display());
    }
    Ok(Outcome::Decided(decision))
}

fn parse_scenarios(name: &str) -> Result<(bool, Metric)> {
    let (kind, metric) = name
        .split_once('-')
        .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario set `{name}`")))?;
    let boundary = match kind {
        "size" => true,
        "power" => false,
        _ => {
            return Err(Error::InvalidConfig(format!(
                "scenario set must start with size- or power-, found `{name}`"
            )))
        }
    };
    let metric = match metric {
        "theta" => Metric::Theta,
        "lambda" => Metric::Lambda,
        "psi" => Metric::Psi,
        _ => return Err(Error::InvalidConfig(format!("unknown metric in scenario set `{name}`"))),
    };
    Ok((boundary, metric))
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let seed = a.common.seed()?;
    let (boundary, metric) = parse_scenarios(&a.scenarios)?;
    let truth = a.synthetic.truth()?;
    let eq = EquivalenceBands::cosine(&truth.grid);
    let band = eq.for_metric(metric);
    let seq = if boundary {
        boundary_violation_scenarios(&truth, band, metric, a.count, a.violation_index)?
    } else {
        interior_scenarios(&truth, band, metric, a.count)?
    };
    let freq = matches!(a.method, MethodArg::Frequentist | MethodArg::Both);
    if freq {
        warn_few_replicates(a.bootstrap_replicates);
    }
    let bayes = matches!(a.method, MethodArg::Bayesian | MethodArg::Both);
    let cfg = StudyConfig {
        replicates: a.replicates,
        seed,
        frequentist: freq.then(|| FrequentistArm {
            bootstrap: BootstrapConfig::new(Design::RandomEffectsMatched, a.bootstrap_replicates, a.alpha, seed),
            bands: eq.clone(),
        }),
        bayesian: bayes.then(|| {
            let mut prior = PriorSpec::default_for(&truth.grid);
            prior.gamma = a.gamma;
            BayesianArm {
                prior,
                mcmc: MwgConfig::new(a.chains, a.iters, a.burnin, a.thin, seed),
                bands: eq.clone(),
            }
        }),
    };
    let result = run_study(&seq, &cfg)?;
    for r in &result.rows {
        println!(
            "scenario {} {}: rate {:.4} (se {:.4}, {} of {} rejected, {} errors)",
            r.scenario,
            r.method.name(),
            r.rate,
            r.std_error,
            r.rejections,
            r.replicates,
            r.errors
        );
    }
    a.common.write(&Report::Study(result))?;
    Ok(Outcome::Done)
}

fn bands(a: BandsArgs) -> Result<Outcome> {
    let grid = match &a.draws {
        Some(_) => None,
        None if a.grid >= 2 => Some(Grid::equispaced(a.grid)),
        None => return Err(Error::InvalidConfig("grid needs at least 2 points".into())),
    };
    let (bands, simultaneous) = match &a.draws {
        Some(p) => {
            let file = read_draws(p)?;
            let mut sim = Vec::with_capacity(file.metrics.len());
            for (m, x) in &file.metrics {
                let b = simultaneous_bands_for(x, *m, a.coverage)?;
                println!(
                    "{}: multiplier {:.4}, achieved coverage {:.4}",
                    m.name(),
                    b.multiplier,
                    b.achieved_coverage
                );
                sim.push((*m, b));
            }
            (EquivalenceBands::cosine(&file.grid), sim)
        }
        None => (
            EquivalenceBands::cosine(grid.as_ref().expect("grid checked")),
            Vec::new(),
        ),
    };
    a.common.write(&Report::Bands(BandsReport { bands, simultaneous }))?;
    Ok(Outcome::Done)
}

fn report(a: ReportArgs) -> Result<Outcome> {
    let r: Report = read_json(&a.input)?;
    a.common.write(&r)?;
    Ok(Outcome::Done)
}

fn generate(a: GenerateArgs) -> Result<Outcome> {
    let seed = a.common.seed()?;
    let data = generate_dataset(&a.synthetic.truth()?, seed)?;
    let path = match a.output {
        Some(p) => p,
        None => {
            std::fs::create_dir_all(&a.common.out)?;
            a.common.out.join("curves.csv")
        }
    };
    write_curves(&path, &CurveData::Grouped(data))?;
    println!("wrote {}", path.display());
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_lines_parse() {
        let c = parse_config("# run\nmode = tost\nalpha=0.1 # level\n\nlocation_only = true\n").unwrap();
        assert_eq!(
            c,
            vec![
                ("mode".into(), "tost".into()),
                ("alpha".into(), "0.1".into()),
                ("location-only".into(), "true".into())
            ]
        );
        match parse_config("alpha 0.1").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn command_line_overrides_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "mode = tost\nalpha = 0.1\nlocation-only = true\n").unwrap();
        let argv = assemble_argv(&args(&["feqt", "--config", cfg.to_str().unwrap(), "--alpha", "0.2"])).unwrap();
        assert_eq!(
            argv,
            args(&["feqt", "tost", "--alpha", "0.1", "--location-only", "--alpha", "0.2"])
        );
        let cli = Cli::try_parse_from(&argv).unwrap();
        match cli.mode {
            Mode::Tost(t) => {
                assert_eq!(t.alpha, 0.2);
                assert!(t.location_only);
            }
            m => panic!("{m:?}"),
        }
        let clash = assemble_argv(&args(&["feqt", "bayes", "--config", cfg.to_str().unwrap()])).unwrap_err();
        assert_eq!(clash.code(), "E_CONFIG");
    }

    #[test]
    fn scenario_names() {
        assert_eq!(parse_scenarios("size-theta").unwrap(), (true, Metric::Theta));
        assert_eq!(parse_scenarios("power-psi").unwrap(), (false, Metric::Psi));
        assert!(parse_scenarios("size").is_err());
        assert!(parse_scenarios("bias-theta").is_err());
    }
}
