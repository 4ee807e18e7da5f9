//! Report assembly and deterministic JSON, CSV and SVG emission.

use crate::bayes::posterior::SamplerDiagnostics;
use crate::bayes::{metric_simultaneous_bands, posterior_equivalence_prob, PosteriorDraws, SimultaneousBand};
use crate::error::Result;
use crate::fdata::{BandKind, BandPair, Grid};
use crate::io::{draws_to_string, fmt_f64, to_json};
use crate::simlab::{Method, StudyResult};
use crate::tost::{Decision, EquivalenceBands, Metric, MetricTest, TostReport};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const TOST_CSV_HEADER: &str =
    "metric,t,estimate,lower_of_upper_ci,upper_of_lower_ci,band_lower,band_upper,violation";
pub const BAYES_CSV_HEADER: &str = "metric,t,center,lower,upper,band_lower,band_upper";

const METRICS: [Metric; 3] = [Metric::Theta, Metric::Lambda, Metric::Psi];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesSettings {
    pub chains: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub gamma: f64,
    /// Nominal simultaneous coverage of the reported bands.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPosterior {
    pub metric: Metric,
    /// `P{H_a | data}`: fraction of draws inside the equivalence bands.
    pub probability: f64,
    pub decision: Decision,
    /// Fraction of draws below the upper band; error-variance ratio only.
    pub noninferiority_probability: Option<f64>,
    pub noninferiority: Option<Decision>,
    pub band: SimultaneousBand,
    pub equivalence: BandPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesReport {
    pub grid: Grid,
    pub settings: BayesSettings,
    pub draws: usize,
    pub metrics: Vec<MetricPosterior>,
    /// Rejects only if every metric clears `γ`.
    pub decision: Decision,
    pub diagnostics: SamplerDiagnostics,
}

impl BayesReport {
    pub fn metric(&self, m: Metric) -> Option<&MetricPosterior> {
        self.metrics.iter().find(|x| x.metric == m)
    }
}

pub fn bayes_report(draws: &PosteriorDraws, eq: &EquivalenceBands, settings: BayesSettings) -> Result<BayesReport> {
    let probs = posterior_equivalence_prob(draws, eq)?;
    let gamma = settings.gamma;
    let metrics = METRICS
        .iter()
        .map(|&m| {
            let probability = probs.get(m);
            let ni = (m == Metric::Lambda).then_some(probs.lambda_below_upper);
            Ok(MetricPosterior {
                metric: m,
                probability,
                decision: Decision::from_reject(probability >= gamma),
                noninferiority_probability: ni,
                noninferiority: ni.map(|p| Decision::from_reject(p >= gamma)),
                band: metric_simultaneous_bands(draws, m, settings.coverage)?,
                equivalence: eq.for_metric(m).clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let decision = Decision::from_reject(metrics.iter().all(|m| m.decision.rejects()));
    Ok(BayesReport {
        grid: draws.grid.clone(),
        settings,
        draws: draws.len(),
        metrics,
        decision,
        diagnostics: draws.diagnostics.clone(),
    })
}

/// Equivalence bands as a standalone artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandsReport {
    pub bands: EquivalenceBands,
    /// Simultaneous bands computed from a draws file, when one was given.
    pub simultaneous: Vec<(Metric, SimultaneousBand)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Tost(TostReport),
    Bayes(BayesReport),
    Study(StudyResult),
    Bands(BandsReport),
}

impl Report {
    fn stem(&self) -> &'static str {
        match self {
            Report::Tost(_) => "tost",
            Report::Bayes(_) => "bayes",
            Report::Study(_) => "study",
            Report::Bands(_) => "bands",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitFlags {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            svg: true,
        }
    }
}

/// Write the requested artifacts into `dir`; returns the paths written.
pub fn emit_report(report: &Report, flags: EmitFlags, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = report.stem();
    let mut written = Vec::new();
    let mut put = |ext: &str, body: String| -> Result<()> {
        let path = dir.join(format!("{stem}.{ext}"));
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    if flags.json {
        put("json", to_json(report)?)?;
    }
    if flags.csv {
        put("csv", report_csv(report))?;
    }
    if flags.svg {
        put("svg", report_svg(report))?;
    }
    Ok(written)
}

pub fn report_csv(report: &Report) -> String {
    match report {
        Report::Tost(r) => tost_csv(r),
        Report::Bayes(r) => bayes_csv(r),
        Report::Study(r) => r.to_csv(),
        Report::Bands(r) => bands_csv(r),
    }
}

pub fn report_svg(report: &Report) -> String {
    match report {
        Report::Tost(r) => tost_svg(r),
        Report::Bayes(r) => bayes_svg(r),
        Report::Study(r) => study_svg(r),
        Report::Bands(r) => bands_svg(r),
    }
}

fn tost_csv(r: &TostReport) -> String {
    let mut out = format!("{TOST_CSV_HEADER}\n");
    for m in &r.metrics {
        for (p, &t) in r.grid.points().iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                m.metric.name(),
                fmt_f64(t),
                fmt_f64(m.estimate[p]),
                fmt_f64(m.bands.lower_of_upper_ci[p]),
                fmt_f64(m.bands.upper_of_lower_ci[p]),
                fmt_f64(m.equivalence.lower[p]),
                fmt_f64(m.equivalence.upper[p]),
                u8::from(m.violations.contains(&p)),
            );
        }
    }
    out
}

fn bayes_csv(r: &BayesReport) -> String {
    let mut out = format!("{BAYES_CSV_HEADER}\n");
    for m in &r.metrics {
        for (p, &t) in r.grid.points().iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.metric.name(),
                fmt_f64(t),
                fmt_f64(m.band.center[p]),
                fmt_f64(m.band.lower[p]),
                fmt_f64(m.band.upper[p]),
                fmt_f64(m.equivalence.lower[p]),
                fmt_f64(m.equivalence.upper[p]),
            );
        }
    }
    out
}

fn bands_csv(r: &BandsReport) -> String {
    let mut out = String::from("metric,kind,t,lower,upper\n");
    for m in METRICS {
        let b = r.bands.for_metric(m);
        for (p, &t) in b.grid.points().iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                m.name(),
                b.kind.name(),
                fmt_f64(t),
                fmt_f64(b.lower[p]),
                fmt_f64(b.upper[p])
            );
        }
    }
    for (m, b) in &r.simultaneous {
        for (p, (lo, hi)) in b.lower.iter().zip(&b.upper).enumerate() {
            let t = r.bands.for_metric(*m).grid.points()[p];
            let _ = writeln!(
                out,
                "{},simultaneous,{},{},{}",
                m.name(),
                fmt_f64(t),
                fmt_f64(*lo),
                fmt_f64(*hi)
            );
        }
    }
    out
}

/// Posterior draws in the draws-file format.
pub fn draws_csv(draws: &PosteriorDraws) -> String {
    draws_to_string(
        &draws.grid,
        &draws.chain,
        &[
            (Metric::Theta, &draws.theta),
            (Metric::Lambda, &draws.lambda),
            (Metric::Psi, &draws.psi),
        ],
    )
}

// ---- SVG ----------------------------------------------------------------

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 34.0;

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One plot panel with a linear x axis and a linear or log y axis.
struct Panel {
    x0: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    log_y: bool,
}

impl Panel {
    fn new(index: usize, grid: &Grid, series: &[&[f64]], log_y: bool) -> Self {
        let pts = grid.points();
        let x_range = (pts[0], pts[pts.len() - 1]);
        let tf = |v: f64| if log_y { v.ln() } else { v };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in series {
            for &v in s.iter() {
                let w = tf(v);
                if w.is_finite() {
                    lo = lo.min(w);
                    hi = hi.max(w);
                }
            }
        }
        if !(lo.is_finite() && hi.is_finite()) {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self {
            x0: index as f64 * PANEL_W,
            x_range,
            y_range: (lo - pad, hi + pad),
            log_y,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        let span = (self.x_range.1 - self.x_range.0).max(1e-12);
        self.x0 + MARGIN_L + (x - self.x_range.0) / span * (PANEL_W - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        let w = if self.log_y { y.ln() } else { y };
        let w = w.clamp(self.y_range.0, self.y_range.1);
        let frac = (w - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        MARGIN_T + (1.0 - frac) * (PANEL_H - MARGIN_T - MARGIN_B)
    }

    fn points(&self, xs: &[f64], ys: &[f64]) -> String {
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{},{}", px(self.sx(x)), px(self.sy(y))))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn polyline(&self, out: &mut String, xs: &[f64], ys: &[f64], class: &str, style: &str) {
        let _ = writeln!(
            out,
            r#"<polyline class="{class}" fill="none" {style} points="{}"/>"#,
            self.points(xs, ys)
        );
    }

    fn area(&self, out: &mut String, xs: &[f64], lower: &[f64], upper: &[f64], class: &str, fill: &str) {
        let mut pts = self.points(xs, upper);
        let rev_x: Vec<f64> = xs.iter().rev().copied().collect();
        let rev_l: Vec<f64> = lower.iter().rev().copied().collect();
        pts.push(' ');
        pts.push_str(&self.points(&rev_x, &rev_l));
        let _ = writeln!(
            out,
            r#"<polygon class="{class}" fill="{fill}" stroke="none" points="{pts}"/>"#
        );
    }

    fn frame(&self, out: &mut String, title: &str) {
        let (l, r) = (self.x0 + MARGIN_L, self.x0 + PANEL_W - MARGIN_R);
        let (t, b) = (MARGIN_T, PANEL_H - MARGIN_B);
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            px(l),
            px(t),
            px(r - l),
            px(b - t)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"#,
            px((l + r) / 2.0),
            escape(title)
        );
        for x in [self.x_range.0, 0.5 * (self.x_range.0 + self.x_range.1), self.x_range.1] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
                px(self.sx(x)),
                px(b + 14.0),
                tick(x)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">t</text>"#,
            px((l + r) / 2.0),
            px(b + 28.0)
        );
        for frac in [0.0, 0.5, 1.0] {
            let w = self.y_range.0 + frac * (self.y_range.1 - self.y_range.0);
            let v = if self.log_y { w.exp() } else { w };
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#,
                px(l - 4.0),
                px(self.sy(v) + 3.0),
                tick(v)
            );
        }
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn svg_document(panels: usize, body: &str) -> String {
    let w = PANEL_W * panels.max(1) as f64;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
        px(w),
        px(PANEL_H),
        px(w),
        px(PANEL_H)
    )
}

const BAND_STYLE: &str = r##"stroke="#000" stroke-width="1.2" stroke-dasharray="5,3""##;
const LINE_STYLE: &str = r##"stroke="#08306b" stroke-width="1.5""##;

fn metric_label(m: Metric) -> &'static str {
    match m {
        Metric::Theta => "θ (mean)",
        Metric::Lambda => "λ (error var.)",
        Metric::Psi => "ψ (effect var.)",
    }
}

fn tost_panel(out: &mut String, index: usize, grid: &Grid, m: &MetricTest) {
    let xs = grid.points();
    let lo = &m.bands.lower_of_upper_ci;
    let hi: Vec<f64> = lo
        .iter()
        .zip(&m.bands.upper_of_lower_ci)
        .map(|(l, u)| l.max(*u))
        .collect();
    let panel = Panel::new(
        index,
        grid,
        &[&m.estimate, lo, &hi, &m.equivalence.lower, &m.equivalence.upper],
        m.equivalence.kind == BandKind::Multiplicative,
    );
    let title = format!(
        "{}: {}",
        metric_label(m.metric),
        match m.decision {
            Decision::RejectNonequivalence => "equivalent",
            Decision::FailToReject => "not equivalent",
        }
    );
    // Overlap of the one-sided regions [L, ∞) and (−∞, U].
    panel.area(out, xs, lo, &hi, "ci-overlap", "#9ecae1");
    panel.polyline(out, xs, &m.equivalence.lower, "equivalence-band", BAND_STYLE);
    panel.polyline(out, xs, &m.equivalence.upper, "equivalence-band", BAND_STYLE);
    panel.polyline(out, xs, &m.estimate, "estimate", LINE_STYLE);
    for &p in &m.violations {
        let y = if m.lower_violations.contains(&p) {
            m.bands.lower_of_upper_ci[p]
        } else {
            m.bands.upper_of_lower_ci[p]
        };
        let _ = writeln!(
            out,
            r##"<circle class="violation" data-index="{p}" cx="{}" cy="{}" r="3.5" fill="#cb181d"/>"##,
            px(panel.sx(xs[p])),
            px(panel.sy(y))
        );
    }
    panel.frame(out, &title);
}

fn tost_svg(r: &TostReport) -> String {
    let mut body = String::new();
    for (i, m) in r.metrics.iter().enumerate() {
        tost_panel(&mut body, i, &r.grid, m);
    }
    svg_document(r.metrics.len(), &body)
}

fn bayes_svg(r: &BayesReport) -> String {
    let mut body = String::new();
    let xs = r.grid.points();
    for (i, m) in r.metrics.iter().enumerate() {
        let panel = Panel::new(
            i,
            &r.grid,
            &[&m.band.lower, &m.band.upper, &m.equivalence.lower, &m.equivalence.upper],
            m.equivalence.kind == BandKind::Multiplicative,
        );
        panel.area(
            &mut body,
            xs,
            &m.band.lower,
            &m.band.upper,
            "simultaneous-band",
            "#c7e9c0",
        );
        panel.polyline(&mut body, xs, &m.equivalence.lower, "equivalence-band", BAND_STYLE);
        panel.polyline(&mut body, xs, &m.equivalence.upper, "equivalence-band", BAND_STYLE);
        panel.polyline(&mut body, xs, &m.band.center, "center", LINE_STYLE);
        panel.frame(
            &mut body,
            &format!("{}: P = {:.3}", metric_label(m.metric), m.probability),
        );
    }
    svg_document(r.metrics.len(), &body)
}

fn bands_svg(r: &BandsReport) -> String {
    let mut body = String::new();
    for (i, m) in METRICS.iter().enumerate() {
        let b = r.bands.for_metric(*m);
        let xs = b.grid.points();
        let sim = r.simultaneous.iter().find(|(k, _)| k == m).map(|(_, s)| s);
        let mut series: Vec<&[f64]> = vec![&b.lower, &b.upper];
        if let Some(s) = sim {
            series.push(&s.lower);
            series.push(&s.upper);
        }
        let panel = Panel::new(i, &b.grid, &series, b.kind == BandKind::Multiplicative);
        if let Some(s) = sim {
            panel.area(&mut body, xs, &s.lower, &s.upper, "simultaneous-band", "#c7e9c0");
        }
        panel.polyline(&mut body, xs, &b.lower, "equivalence-band", BAND_STYLE);
        panel.polyline(&mut body, xs, &b.upper, "equivalence-band", BAND_STYLE);
        panel.frame(&mut body, metric_label(*m));
    }
    svg_document(3, &body)
}

fn study_svg(r: &StudyResult) -> String {
    let mut body = String::new();
    let scenarios: Vec<f64> = {
        let mut s: Vec<usize> = r.rows.iter().map(|x| x.scenario).collect();
        s.sort_unstable();
        s.dedup();
        s.into_iter().map(|v| v as f64).collect()
    };
    let grid = match Grid::new(scenarios.clone()) {
        Ok(g) => g,
        Err(_) => return svg_document(1, ""),
    };
    let bounds: Vec<f64> = r
        .rows
        .iter()
        .flat_map(|x| [x.rate - 2.0 * x.std_error, x.rate + 2.0 * x.std_error])
        .chain([0.0])
        .collect();
    let panel = Panel::new(0, &grid, &[&bounds], false);
    for (method, colour) in [(Method::Frequentist, "#08306b"), (Method::Bayesian, "#a50f15")] {
        let rows: Vec<_> = r.rows.iter().filter(|x| x.method == method).collect();
        if rows.is_empty() {
            continue;
        }
        let xs: Vec<f64> = rows.iter().map(|x| x.scenario as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|x| x.rate).collect();
        panel.polyline(
            &mut body,
            &xs,
            &ys,
            method.name(),
            &format!(r#"stroke="{colour}" stroke-width="1.5""#),
        );
        for x in &rows {
            let cx = px(panel.sx(x.scenario as f64));
            let _ = writeln!(
                body,
                r#"<line class="{}" x1="{cx}" x2="{cx}" y1="{}" y2="{}" stroke="{colour}"/>"#,
                method.name(),
                px(panel.sy(x.rate - 2.0 * x.std_error)),
                px(panel.sy(x.rate + 2.0 * x.std_error))
            );
        }
    }
    panel.frame(
        &mut body,
        &format!("rejection rate, {} {:?}", r.metric.name(), r.kind).to_lowercase(),
    );
    svg_document(1, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tost::{tost_decide, MetricEvidence, OneSidedBands};

    fn report() -> TostReport {
        let grid = Grid::equispaced(5);
        let eq = EquivalenceBands::cosine(&grid);
        let ev = MetricEvidence {
            estimate: vec![0.0; 5],
            bands: OneSidedBands {
                metric: Metric::Theta,
                lower_of_upper_ci: vec![-0.05, -0.05, -0.05, -0.05, -0.5],
                upper_of_lower_ci: vec![0.05, 0.05, 0.9, 0.05, 0.05],
            },
        };
        tost_decide(&[ev], &eq).unwrap()
    }

    #[test]
    fn tost_outputs_are_deterministic() {
        let r = Report::Tost(report());
        assert_eq!(report_svg(&r), report_svg(&r));
        assert_eq!(to_json(&r).unwrap(), to_json(&r).unwrap());
        let back: Report = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_header_matches_schema() {
        let csv = report_csv(&Report::Tost(report()));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TOST_CSV_HEADER));
        let cols = TOST_CSV_HEADER.split(',').count();
        assert!(lines.all(|l| l.split(',').count() == cols));
    }

    #[test]
    fn violations_become_markers() {
        let r = report();
        let m = r.metric(Metric::Theta).unwrap();
        assert_eq!(m.violations, vec![2, 4]);
        let svg = report_svg(&Report::Tost(r.clone()));
        assert_eq!(svg.matches(r#"class="violation""#).count(), 2);
        assert!(svg.contains(r#"data-index="2""#) && svg.contains(r#"data-index="4""#));
        assert!(svg.contains(r#"class="ci-overlap""#));
    }
}
