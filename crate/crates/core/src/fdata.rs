//! Grids, curve samples, paired and grouped samples, and equivalence bands.
//!
//! All types validate on construction and on deserialization; once built they
//! are immutable and cheap to share between workers.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Ordered evaluation points in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    points: Arc<[f64]>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        for (i, &t) in points.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidGrid(format!("point {i} = {t} lies outside [0, 1]")));
            }
            if i > 0 && t <= points[i - 1] {
                return Err(Error::InvalidGrid(format!(
                    "points not strictly increasing at index {i}"
                )));
            }
        }
        Ok(Self { points: points.into() })
    }

    /// `len` equispaced points covering `[0, 1]` (a single point sits at 0.5).
    pub fn equispaced(len: usize) -> Self {
        assert!(len > 0, "grid needs at least one point");
        let points: Vec<f64> = if len == 1 {
            vec![0.5]
        } else {
            (0..len).map(|i| i as f64 / (len - 1) as f64).collect()
        };
        Self { points: points.into() }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        Grid::new(points)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.points.to_vec()
    }
}

/// Row-major `rows × cols` matrix; each row is one curve on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct CurveMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<RawMatrix> for CurveMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        CurveMatrix::from_flat(raw.rows, raw.cols, raw.values)
    }
}

impl CurveMatrix {
    pub fn from_flat(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "curve matrix values".into(),
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    what: "curve row".into(),
                    expected: cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols + j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.rows() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        let n = self.rows as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Unbiased column variances; the caller guarantees `rows >= 2`.
    pub fn column_variances(&self) -> Vec<f64> {
        let m = self.column_means();
        let mut v = vec![0.0; self.cols];
        for r in self.rows() {
            for ((acc, x), mu) in v.iter_mut().zip(r).zip(&m) {
                let d = x - mu;
                *acc += d * d;
            }
        }
        let denom = self.rows as f64 - 1.0;
        v.iter_mut().for_each(|x| *x /= denom);
        v
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::NonFinite {
                what: what.into(),
                row: pos / self.cols.max(1),
                col: pos % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }
}

/// Anything that can re-check its own invariants.
pub trait Validate: Sized {
    fn validate(self) -> Result<Self>;
}

/// Validate any sample type, returning it unchanged or the first violated invariant.
pub fn validate_sample<S: Validate>(sample: S) -> Result<S> {
    sample.validate()
}

fn check_grid(grid: &Grid) -> Result<()> {
    Grid::new(grid.points().to_vec()).map(|_| ())
}

fn check_matrix(grid: &Grid, m: &CurveMatrix, what: &str) -> Result<()> {
    if m.ncols() != grid.len() {
        return Err(Error::ShapeMismatch {
            what: format!("{what} columns vs grid"),
            expected: grid.len(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InsufficientSample(format!("{what} has no curves")));
    }
    m.check_finite(what)
}

/// Curves from one population on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFunctional")]
pub struct FunctionalSample {
    pub grid: Grid,
    pub curves: CurveMatrix,
}

#[derive(Deserialize)]
struct RawFunctional {
    grid: Grid,
    curves: CurveMatrix,
}

impl TryFrom<RawFunctional> for FunctionalSample {
    type Error = Error;
    fn try_from(r: RawFunctional) -> Result<Self> {
        FunctionalSample::new(r.grid, r.curves)
    }
}

impl FunctionalSample {
    pub fn new(grid: Grid, curves: CurveMatrix) -> Result<Self> {
        Self { grid, curves }.validate()
    }

    pub fn len(&self) -> usize {
        self.curves.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.nrows() == 0
    }
}

impl Validate for FunctionalSample {
    fn validate(self) -> Result<Self> {
        check_grid(&self.grid)?;
        check_matrix(&self.grid, &self.curves, "curves")?;
        Ok(self)
    }
}

/// Matched pairs: row `k` of `curves_1` and `curves_2` were recorded together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPaired")]
pub struct PairedFunctionalSample {
    pub grid: Grid,
    pub curves_1: CurveMatrix,
    pub curves_2: CurveMatrix,
}

#[derive(Deserialize)]
struct RawPaired {
    grid: Grid,
    curves_1: CurveMatrix,
    curves_2: CurveMatrix,
}

impl TryFrom<RawPaired> for PairedFunctionalSample {
    type Error = Error;
    fn try_from(r: RawPaired) -> Result<Self> {
        PairedFunctionalSample::new(r.grid, r.curves_1, r.curves_2)
    }
}

impl PairedFunctionalSample {
    pub fn new(grid: Grid, curves_1: CurveMatrix, curves_2: CurveMatrix) -> Result<Self> {
        Self {
            grid,
            curves_1,
            curves_2,
        }
        .validate()
    }

    pub fn len(&self) -> usize {
        self.curves_1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.curves_1.nrows() == 0
    }

    pub fn channel(&self, j: usize) -> &CurveMatrix {
        if j == 0 {
            &self.curves_1
        } else {
            &self.curves_2
        }
    }

    /// The same pairs with the two channels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            curves_1: self.curves_2.clone(),
            curves_2: self.curves_1.clone(),
        }
    }
}

impl Validate for PairedFunctionalSample {
    fn validate(self) -> Result<Self> {
        check_grid(&self.grid)?;
        check_matrix(&self.grid, &self.curves_1, "curves_1")?;
        check_matrix(&self.grid, &self.curves_2, "curves_2")?;
        if self.curves_1.nrows() != self.curves_2.nrows() {
            return Err(Error::ShapeMismatch {
                what: "paired channel rows".into(),
                expected: self.curves_1.nrows(),
                found: self.curves_2.nrows(),
            });
        }
        Ok(self)
    }
}

/// `A` individuals, each contributing `n_i` matched pairs of curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrouped")]
pub struct GroupedPairedSample {
    pub grid: Grid,
    pub groups: Vec<PairedFunctionalSample>,
}

#[derive(Deserialize)]
struct RawGrouped {
    grid: Grid,
    groups: Vec<PairedFunctionalSample>,
}

impl TryFrom<RawGrouped> for GroupedPairedSample {
    type Error = Error;
    fn try_from(r: RawGrouped) -> Result<Self> {
        GroupedPairedSample::new(r.grid, r.groups)
    }
}

impl GroupedPairedSample {
    pub fn new(grid: Grid, groups: Vec<PairedFunctionalSample>) -> Result<Self> {
        Self { grid, groups }.validate()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(PairedFunctionalSample::len).collect()
    }

    /// Total number of matched pairs `N`.
    pub fn total(&self) -> usize {
        self.groups.iter().map(PairedFunctionalSample::len).sum()
    }

    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            groups: self.groups.iter().map(PairedFunctionalSample::swapped).collect(),
        }
    }

    /// All pairs pooled into a single matched sample, in group order.
    pub fn pooled(&self) -> PairedFunctionalSample {
        let t = self.grid.len();
        let mut c1 = Vec::with_capacity(self.total() * t);
        let mut c2 = Vec::with_capacity(self.total() * t);
        for g in &self.groups {
            c1.extend_from_slice(g.curves_1.as_slice());
            c2.extend_from_slice(g.curves_2.as_slice());
        }
        let n = self.total();
        PairedFunctionalSample {
            grid: self.grid.clone(),
            curves_1: CurveMatrix {
                rows: n,
                cols: t,
                values: c1,
            },
            curves_2: CurveMatrix {
                rows: n,
                cols: t,
                values: c2,
            },
        }
    }
}

impl Validate for GroupedPairedSample {
    fn validate(self) -> Result<Self> {
        check_grid(&self.grid)?;
        if self.groups.len() < 2 {
            return Err(Error::InsufficientSample(format!(
                "grouped sample needs at least 2 groups, found {}",
                self.groups.len()
            )));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.grid != self.grid {
                return Err(Error::InvalidGrid(format!("group {i} uses a different grid")));
            }
            if g.is_empty() {
                return Err(Error::InsufficientSample(format!("group {i} is empty")));
            }
        }
        let groups = self
            .groups
            .into_iter()
            .map(Validate::validate)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid,
            groups,
        })
    }
}

/// Additive bands bound a difference (θ); multiplicative bands bound a ratio (λ, ψ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    Additive,
    Multiplicative,
}

impl BandKind {
    pub fn name(self) -> &'static str {
        match self {
            BandKind::Additive => "additive",
            BandKind::Multiplicative => "multiplicative",
        }
    }
}

/// Lower and upper equivalence bands evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBand")]
pub struct BandPair {
    pub grid: Grid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kind: BandKind,
}

#[derive(Deserialize)]
struct RawBand {
    grid: Grid,
    lower: Vec<f64>,
    upper: Vec<f64>,
    kind: BandKind,
}

impl TryFrom<RawBand> for BandPair {
    type Error = Error;
    fn try_from(r: RawBand) -> Result<Self> {
        BandPair::new(r.grid, r.lower, r.upper, r.kind)
    }
}

impl BandPair {
    pub fn new(grid: Grid, lower: Vec<f64>, upper: Vec<f64>, kind: BandKind) -> Result<Self> {
        Self {
            grid,
            lower,
            upper,
            kind,
        }
        .validate()
    }

    /// Constant bands `(lower, upper)` at every grid point.
    pub fn constant(grid: &Grid, lower: f64, upper: f64, kind: BandKind) -> Result<Self> {
        let t = grid.len();
        Self::new(grid.clone(), vec![lower; t], vec![upper; t], kind)
    }

    /// Bands whose open interval is the whole admissible range.
    pub fn unbounded(grid: &Grid, kind: BandKind) -> Self {
        let lower = match kind {
            BandKind::Additive => f64::NEG_INFINITY,
            BandKind::Multiplicative => f64::MIN_POSITIVE,
        };
        Self::constant(grid, lower, f64::INFINITY, kind).expect("unbounded bands are valid")
    }

    /// Band midline: arithmetic for additive bands, geometric for multiplicative.
    pub fn midline(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| match self.kind {
                BandKind::Additive => 0.5 * (l + u),
                BandKind::Multiplicative => (l * u).sqrt(),
            })
            .collect()
    }

    /// Bands for the metric with channels exchanged: `(-u, -l)` or `(1/u, 1/l)`.
    pub fn mirrored(&self) -> Self {
        let (lower, upper) = match self.kind {
            BandKind::Additive => (
                self.upper.iter().map(|u| -u).collect(),
                self.lower.iter().map(|l| -l).collect(),
            ),
            BandKind::Multiplicative => (
                self.upper.iter().map(|u| 1.0 / u).collect(),
                self.lower.iter().map(|l| 1.0 / l).collect(),
            ),
        };
        Self {
            grid: self.grid.clone(),
            lower,
            upper,
            kind: self.kind,
        }
    }

    /// Width of the band on the scale where the metric is additive.
    pub fn log_scale_width(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| match self.kind {
                BandKind::Additive => u - l,
                BandKind::Multiplicative => u.ln() - l.ln(),
            })
            .collect()
    }
}

impl Validate for BandPair {
    fn validate(self) -> Result<Self> {
        check_grid(&self.grid)?;
        let t = self.grid.len();
        for (what, v) in [("lower", &self.lower), ("upper", &self.upper)] {
            if v.len() != t {
                return Err(Error::ShapeMismatch {
                    what: format!("{what} band"),
                    expected: t,
                    found: v.len(),
                });
            }
        }
        for i in 0..t {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_nan() || u.is_nan() || l >= u {
                return Err(Error::InvalidBand(format!(
                    "need lower < upper at index {i}, found ({l}, {u})"
                )));
            }
            if self.kind == BandKind::Multiplicative && l <= 0.0 {
                return Err(Error::InvalidBand(format!(
                    "multiplicative band not positive at index {i}"
                )));
            }
        }
        Ok(self)
    }
}

/// Cosine equivalence bands.
///
/// Additive: `κ_l(t) = -0.05 cos(2πt) - 0.15`, `κ_u(t) = 0.05 cos(2πt) + 0.15`.
/// Multiplicative: `ζ_u(t) = 0.1 cos(2πt) + 1.8`, `ζ_l(t) = 1 / ζ_u(t)`.
pub fn make_cosine_bands(grid: &Grid, kind: BandKind) -> BandPair {
    let c: Vec<f64> = grid.points().iter().map(|t| (2.0 * PI * t).cos()).collect();
    let (lower, upper) = match kind {
        BandKind::Additive => (
            c.iter().map(|c| -0.05 * c - 0.15).collect(),
            c.iter().map(|c| 0.05 * c + 0.15).collect(),
        ),
        BandKind::Multiplicative => {
            let upper: Vec<f64> = c.iter().map(|c| 0.1 * c + 1.8).collect();
            (upper.iter().map(|u| 1.0 / u).collect(), upper)
        }
    };
    BandPair {
        grid: grid.clone(),
        lower,
        upper,
        kind,
    }
}

/// True iff `lower(t) < curve(t) < upper(t)` at every grid point.
pub fn band_contains(band: &BandPair, curve: &[f64]) -> Result<bool> {
    if curve.len() != band.grid.len() {
        return Err(Error::ShapeMismatch {
            what: "curve vs band grid".into(),
            expected: band.grid.len(),
            found: curve.len(),
        });
    }
    Ok(curve
        .iter()
        .zip(band.lower.iter().zip(&band.upper))
        .all(|(x, (l, u))| l < x && x < u))
}
