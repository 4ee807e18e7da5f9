//! Curve and draw files.
//!
//! A curve file is UTF-8 CSV:
//!
//! ```text
//! #feqt-curves v1; grid=0,0.25,0.5,0.75,1
//! group,channel,breath,v1,v2,v3,v4,v5
//! 1,1,1,0.12,0.5,...
//! 1,2,1,0.11,0.48,...
//! ```
//!
//! `channel` is 1 or 2; `group` is empty for ungrouped data and otherwise a
//! label without commas. Files with one channel only are single samples;
//! two channels must pair up on `(group, breath)`. Floats use the shortest
//! decimal that round-trips, so write-then-read is bit-exact.

use crate::error::{Error, Result};
use crate::fdata::{CurveMatrix, FunctionalSample, Grid, GroupedPairedSample, PairedFunctionalSample};
use crate::tost::Metric;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub const CURVES_MAGIC: &str = "#feqt-curves v1";
pub const DRAWS_MAGIC: &str = "#feqt-draws v1";

/// Any sample layout a curve file can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveData {
    Single(FunctionalSample),
    Paired(PairedFunctionalSample),
    Grouped(GroupedPairedSample),
}

impl CurveData {
    pub fn grid(&self) -> &Grid {
        match self {
            CurveData::Single(s) => &s.grid,
            CurveData::Paired(s) => &s.grid,
            CurveData::Grouped(g) => &g.grid,
        }
    }

    pub fn layout(&self) -> &'static str {
        match self {
            CurveData::Single(_) => "single-channel",
            CurveData::Paired(_) => "matched pairs",
            CurveData::Grouped(_) => "grouped pairs",
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn grid_header(magic: &str, grid: &Grid) -> String {
    let pts: Vec<String> = grid.points().iter().map(|&x| fmt_f64(x)).collect();
    format!("{magic}; grid={}\n", pts.join(","))
}

fn value_columns(t: usize) -> String {
    (1..=t).map(|k| format!(",v{k}")).collect()
}

fn push_row(out: &mut String, group: &str, channel: usize, breath: usize, values: &[f64]) {
    let _ = write!(out, "{group},{channel},{breath}");
    for &v in values {
        out.push(',');
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
}

pub fn curves_to_string(data: &CurveData) -> String {
    let grid = data.grid();
    let mut out = grid_header(CURVES_MAGIC, grid);
    let _ = writeln!(out, "group,channel,breath{}", value_columns(grid.len()));
    match data {
        CurveData::Single(s) => {
            for (k, row) in s.curves.rows().enumerate() {
                push_row(&mut out, "", 1, k + 1, row);
            }
        }
        CurveData::Paired(s) => write_pairs(&mut out, "", s),
        CurveData::Grouped(g) => {
            for (i, s) in g.groups.iter().enumerate() {
                write_pairs(&mut out, &(i + 1).to_string(), s);
            }
        }
    }
    out
}

fn write_pairs(out: &mut String, group: &str, s: &PairedFunctionalSample) {
    for k in 0..s.len() {
        push_row(out, group, 1, k + 1, s.curves_1.row(k));
        push_row(out, group, 2, k + 1, s.curves_2.row(k));
    }
}

pub fn write_curves(path: &Path, data: &CurveData) -> Result<()> {
    std::fs::write(path, curves_to_string(data))?;
    Ok(())
}

pub fn read_curves(path: &Path) -> Result<CurveData> {
    parse_curves(&std::fs::read_to_string(path)?)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: `{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what}: non-finite value `{tok}`")));
    }
    Ok(v)
}

fn parse_grid_header(first: Option<&str>, magic: &str) -> Result<Grid> {
    let header = first.ok_or_else(|| parse_err(1, "empty file"))?;
    let rest = header
        .strip_prefix(magic)
        .and_then(|r| r.trim_start().strip_prefix(';'))
        .and_then(|r| r.trim_start().strip_prefix("grid="))
        .ok_or_else(|| parse_err(1, format!("expected header `{magic}; grid=t1,t2,...`")))?;
    let pts = rest
        .split(',')
        .map(|tok| parse_f64(tok, 1, "grid point"))
        .collect::<Result<Vec<_>>>()?;
    Grid::new(pts).map_err(|e| parse_err(1, e.to_string()))
}

fn check_columns(line: Option<&str>, lead: &str, t: usize) -> Result<()> {
    let expected = format!("{lead}{}", value_columns(t));
    match line {
        Some(l) if l.trim_end() == expected => Ok(()),
        Some(l) => Err(parse_err(
            2,
            format!("expected column header `{expected}`, found `{}`", l.trim_end()),
        )),
        None => Err(parse_err(2, "missing column header")),
    }
}

struct Row {
    line: usize,
    channel: usize,
    values: Vec<f64>,
}

/// Parse a curve file and infer its layout.
pub fn parse_curves(text: &str) -> Result<CurveData> {
    let mut lines = text.lines();
    let grid = parse_grid_header(lines.next(), CURVES_MAGIC)?;
    let t = grid.len();
    check_columns(lines.next(), "group,channel,breath", t)?;

    // Groups and breaths keep their order of first appearance.
    let mut groups: Vec<(String, Vec<(String, [Option<Row>; 2])>)> = Vec::new();
    let mut group_index: HashMap<String, usize> = HashMap::new();
    let mut breath_index: HashMap<(usize, String), usize> = HashMap::new();
    let mut grouped: Option<bool> = None;
    let mut channels = [false; 2];
    for (k, raw) in lines.enumerate() {
        let line = k + 3;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != t + 3 {
            return Err(parse_err(
                line,
                format!(
                    "expected {} fields (3 keys and {t} values), found {}",
                    t + 3,
                    fields.len()
                ),
            ));
        }
        let group = fields[0].trim();
        let channel = match fields[1].trim() {
            "1" => 1,
            "2" => 2,
            other => return Err(parse_err(line, format!("channel must be 1 or 2, found `{other}`"))),
        };
        let breath = fields[2].trim();
        if breath.is_empty() {
            return Err(parse_err(line, "empty breath id"));
        }
        let has_group = !group.is_empty();
        match grouped {
            None => grouped = Some(has_group),
            Some(g) if g != has_group => {
                return Err(parse_err(line, "group ids must be given on every row or on none"));
            }
            _ => {}
        }
        let values = fields[3..]
            .iter()
            .enumerate()
            .map(|(p, tok)| parse_f64(tok, line, &format!("v{}", p + 1)))
            .collect::<Result<Vec<_>>>()?;
        let gi = *group_index.entry(group.to_string()).or_insert_with(|| {
            groups.push((group.to_string(), Vec::new()));
            groups.len() - 1
        });
        let bi = *breath_index.entry((gi, breath.to_string())).or_insert_with(|| {
            groups[gi].1.push((breath.to_string(), [None, None]));
            groups[gi].1.len() - 1
        });
        let slot = &mut groups[gi].1[bi].1[channel - 1];
        if let Some(prev) = slot {
            return Err(parse_err(
                line,
                format!(
                    "duplicate row for group `{group}`, channel {channel}, breath `{breath}` (first at line {})",
                    prev.line
                ),
            ));
        }
        *slot = Some(Row { line, channel, values });
        channels[channel - 1] = true;
    }
    if groups.is_empty() {
        return Err(parse_err(3, "no curve rows"));
    }

    if !(channels[0] && channels[1]) {
        let rows: Vec<Vec<f64>> = groups
            .into_iter()
            .flat_map(|(_, b)| b)
            .filter_map(|(_, [a, b])| a.or(b))
            .map(|r| r.values)
            .collect();
        let curves = CurveMatrix::from_rows(&rows)?;
        return Ok(CurveData::Single(FunctionalSample::new(grid, curves)?));
    }

    let mut samples = Vec::with_capacity(groups.len());
    for (label, breaths) in groups {
        let mut c1 = Vec::with_capacity(breaths.len());
        let mut c2 = Vec::with_capacity(breaths.len());
        for (breath, [a, b]) in breaths {
            match (a, b) {
                (Some(a), Some(b)) => {
                    c1.push(a.values);
                    c2.push(b.values);
                }
                (Some(r), None) | (None, Some(r)) => {
                    return Err(parse_err(
                        r.line,
                        format!(
                            "orphan channel {} row: group `{label}`, breath `{breath}` has no channel {} partner",
                            r.channel,
                            3 - r.channel
                        ),
                    ));
                }
                (None, None) => unreachable!("every breath entry holds at least one row"),
            }
        }
        samples.push(PairedFunctionalSample::new(
            grid.clone(),
            CurveMatrix::from_rows(&c1)?,
            CurveMatrix::from_rows(&c2)?,
        )?);
    }
    if grouped == Some(true) {
        if samples.len() < 2 {
            return Err(Error::InsufficientSample(format!(
                "grouped curve file has {} group; the random-effects design needs at least 2",
                samples.len()
            )));
        }
        Ok(CurveData::Grouped(GroupedPairedSample::new(grid, samples)?))
    } else {
        Ok(CurveData::Paired(samples.pop().expect("one ungrouped sample")))
    }
}

/// Pooled posterior metric draws, one row per draw and metric.
pub fn draws_to_string(grid: &Grid, chain: &[usize], metrics: &[(Metric, &CurveMatrix)]) -> String {
    let mut out = grid_header(DRAWS_MAGIC, grid);
    let _ = writeln!(out, "metric,chain,draw{}", value_columns(grid.len()));
    for (m, x) in metrics {
        for (i, row) in x.rows().enumerate() {
            let _ = write!(out, "{},{},{}", m.name(), chain[i], i + 1);
            for &v in row {
                out.push(',');
                out.push_str(&fmt_f64(v));
            }
            out.push('\n');
        }
    }
    out
}

/// Draws of each metric present in a draws file, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsFile {
    pub grid: Grid,
    pub metrics: Vec<(Metric, CurveMatrix)>,
}

pub fn parse_draws(text: &str) -> Result<DrawsFile> {
    let mut lines = text.lines();
    let grid = parse_grid_header(lines.next(), DRAWS_MAGIC)?;
    let t = grid.len();
    check_columns(lines.next(), "metric,chain,draw", t)?;
    let mut metrics: Vec<(Metric, Vec<Vec<f64>>)> = Vec::new();
    for (k, raw) in lines.enumerate() {
        let line = k + 3;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != t + 3 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", t + 3, fields.len()),
            ));
        }
        let metric = match fields[0].trim() {
            "theta" => Metric::Theta,
            "lambda" => Metric::Lambda,
            "psi" => Metric::Psi,
            other => return Err(parse_err(line, format!("unknown metric `{other}`"))),
        };
        let values = fields[3..]
            .iter()
            .map(|tok| parse_f64(tok, line, "draw"))
            .collect::<Result<Vec<_>>>()?;
        match metrics.iter_mut().find(|(m, _)| *m == metric) {
            Some((_, rows)) => rows.push(values),
            None => metrics.push((metric, vec![values])),
        }
    }
    if metrics.is_empty() {
        return Err(parse_err(3, "no draw rows"));
    }
    Ok(DrawsFile {
        grid,
        metrics: metrics
            .into_iter()
            .map(|(m, rows)| CurveMatrix::from_rows(&rows).map(|c| (m, c)))
            .collect::<Result<_>>()?,
    })
}

pub fn read_draws(path: &Path) -> Result<DrawsFile> {
    parse_draws(&std::fs::read_to_string(path)?)
}

/// Pretty JSON with a trailing newline; floats round-trip exactly.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(vec![0.0, 0.5, 1.0]).unwrap()
    }

    fn paired(rows: &[[f64; 3]], shift: f64) -> PairedFunctionalSample {
        let c1: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let c2: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        PairedFunctionalSample::new(
            grid(),
            CurveMatrix::from_rows(&c1).unwrap(),
            CurveMatrix::from_rows(&c2).unwrap(),
        )
        .unwrap()
    }

    const HEAD: &str = "#feqt-curves v1; grid=0.0,0.5,1.0\ngroup,channel,breath,v1,v2,v3\n";

    #[test]
    fn grouped_round_trip_is_bit_exact() {
        let awkward = [0.1 + 0.2, 1e-300, -7.0 / 3.0];
        let g = GroupedPairedSample::new(
            grid(),
            vec![
                paired(&[awkward, [1.0, 2.0, 3.0]], 0.3),
                paired(&[[f64::MIN_POSITIVE, 5e-324, 1e300]], -1.0),
            ],
        )
        .unwrap();
        let data = CurveData::Grouped(g);
        let text = curves_to_string(&data);
        assert_eq!(parse_curves(&text).unwrap(), data);
        assert_eq!(curves_to_string(&parse_curves(&text).unwrap()), text);
    }

    #[test]
    fn layouts_are_inferred() {
        let single = format!("{HEAD},1,a,1,2,3\n,1,b,4,5,6\n");
        assert!(matches!(parse_curves(&single).unwrap(), CurveData::Single(s) if s.len() == 2));
        let pair = format!("{HEAD},2,a,1,2,3\n,1,a,4,5,6\n");
        match parse_curves(&pair).unwrap() {
            CurveData::Paired(p) => assert_eq!(p.curves_1.row(0), &[4.0, 5.0, 6.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_group_is_rejected_for_grouped_layout() {
        let text = format!("{HEAD}g,1,1,1,2,3\ng,2,1,1,2,3\ng,1,2,1,2,3\ng,2,2,1,2,3\n");
        let err = parse_curves(&text).unwrap_err();
        assert_eq!(err.code(), "E_SAMPLE_SIZE");
        assert!(err.to_string().contains("at least 2"), "{err}");
    }

    #[test]
    fn channel_three_names_its_line() {
        let text = format!("{HEAD},1,a,1,2,3\n,3,a,1,2,3\n");
        match parse_curves(&text).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("channel"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let line_of = |text: &str| match parse_curves(text).unwrap_err() {
            Error::Parse { line, .. } => line,
            e => panic!("{e}"),
        };
        assert_eq!(line_of("#curves; grid=0,1\n"), 1);
        assert_eq!(
            line_of("#feqt-curves v1; grid=0.0,0.5,1.0\ngroup,channel,breath,v1,v2\n"),
            2
        );
        assert_eq!(line_of(&format!("{HEAD},1,a,1,2\n")), 3);
        assert_eq!(line_of(&format!("{HEAD},1,a,1,2,3\n,2,a,1,x,3\n")), 4);
        assert_eq!(line_of(&format!("{HEAD},1,a,1,2,3\n,1,b,1,2,3\n,2,a,1,2,3\n")), 4);
        assert_eq!(line_of(&format!("{HEAD},1,a,1,2,3\n,1,a,1,2,3\n")), 4);
        assert_eq!(line_of(&format!("{HEAD},1,a,1,2,3\ng,2,a,1,2,3\n")), 4);
        assert_eq!(line_of(&format!("{HEAD},1,a,1,NaN,3\n")), 3);
    }

    #[test]
    fn draws_round_trip() {
        let g = grid();
        let th = CurveMatrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![1e-17, -0.0, 2.5]]).unwrap();
        let la = CurveMatrix::from_rows(&[vec![1.1, 0.9, 1.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let text = draws_to_string(&g, &[0, 1], &[(Metric::Theta, &th), (Metric::Lambda, &la)]);
        let back = parse_draws(&text).unwrap();
        assert_eq!(back.grid, g);
        assert_eq!(back.metrics, vec![(Metric::Theta, th), (Metric::Lambda, la)]);
    }
}
