//! Discretized measure spaces on an interval.
//!
//! A [`Grid`] partitions `(a, b)` into cells with positive measures. Functions
//! live on the cells ([`GridFunction`]), measurable sets are cell masks
//! ([`CellSet`]), and every inner product is weighted by the cell measures so
//! that discrete identities mirror their `L²` counterparts.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Cell measures and centers of a partition of `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    weights: Vec<f64>,
    midpoints: Vec<f64>,
    interval: (f64, f64),
}

impl Grid {
    /// `n` equal cells of width `(b - a) / n`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Arc<Grid>> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid bounds must be finite, got ({a}, {b})"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs at least one cell".into()));
        }
        if a >= b {
            return Err(Error::InvalidArgument(format!("need a < b, got ({a}, {b})")));
        }
        let h = (b - a) / n as f64;
        let midpoints = (0..n).map(|i| a + (i as f64 + 0.5) * h).collect();
        Ok(Arc::new(Grid {
            weights: vec![h; n],
            midpoints,
            interval: (a, b),
        }))
    }

    /// Builds a grid from explicit cell data, checking every invariant.
    pub fn from_parts(weights: Vec<f64>, midpoints: Vec<f64>, interval: (f64, f64)) -> Result<Arc<Grid>> {
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!("bad interval ({a}, {b})")));
        }
        if weights.is_empty() || weights.len() != midpoints.len() {
            return Err(Error::InvalidArgument(
                "weights and midpoints must be nonempty and of equal length".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument("cell weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if ((total - (b - a)) / (b - a)).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, interval length is {}",
                b - a
            )));
        }
        let increasing = midpoints.windows(2).all(|w| w[0] < w[1]);
        let inside = midpoints.iter().all(|&x| x > a && x < b);
        if !increasing || !inside {
            return Err(Error::InvalidArgument(
                "midpoints must be strictly increasing and inside the interval".into(),
            ));
        }
        Ok(Arc::new(Grid {
            weights,
            midpoints,
            interval,
        }))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// `m(Ω)`.
    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The common cell width when all cells have the same measure.
    pub fn uniform_width(&self) -> Option<f64> {
        let h = self.weights[0];
        self.weights
            .iter()
            .all(|w| (w - h).abs() <= 1e-12 * h)
            .then_some(h)
    }
}

/// Two grid handles describe the same partition.
pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn check_same(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("operands live on different grids".into()))
    }
}

/// Elementwise operations on grid functions.
#[derive(Debug, Clone, Copy)]
pub enum Pointwise<'a> {
    /// `max(v, c)`
    MaxWith(f64),
    /// `v⁻ = max(-v, 0)`
    NegativePart,
    Abs,
    Scale(f64),
    Add(&'a GridFunction),
}

/// A real function on the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at cell {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Evaluates `f` at the cell midpoints.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.midpoints().iter().map(|&x| f(x)).collect();
        GridFunction::new(grid.clone(), values)
    }

    /// Internal constructor for values produced by finite arithmetic.
    pub(crate) fn from_vec(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ m_i u_i v_i`
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        check_same(&self.grid, &other.grid)?;
        Ok(weighted_dot(self.grid.weights(), &self.values, &other.values))
    }

    /// `⟨1, v⟩`
    pub fn integral(&self) -> f64 {
        weighted_dot(self.grid.weights(), &self.values, &vec![1.0; self.len()])
    }

    /// Weighted `L²` norm.
    pub fn norm(&self) -> f64 {
        weighted_dot(self.grid.weights(), &self.values, &self.values).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn pointwise(&self, op: Pointwise<'_>) -> Result<GridFunction> {
        let values = match op {
            Pointwise::MaxWith(c) => self.values.iter().map(|v| v.max(c)).collect(),
            Pointwise::NegativePart => self.values.iter().map(|v| (-v).max(0.0)).collect(),
            Pointwise::Abs => self.values.iter().map(|v| v.abs()).collect(),
            Pointwise::Scale(s) => self.values.iter().map(|v| s * v).collect(),
            Pointwise::Add(other) => {
                check_same(&self.grid, &other.grid)?;
                self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect()
            }
        };
        GridFunction::new(self.grid.clone(), values)
    }

    pub fn negative_part(&self) -> GridFunction {
        self.map(|v| (-v).max(0.0))
    }

    pub fn abs(&self) -> GridFunction {
        self.map(f64::abs)
    }

    pub fn scale(&self, s: f64) -> GridFunction {
        self.map(|v| s * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_vec(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        check_same(&self.grid, &other.grid)?;
        Ok(GridFunction::from_vec(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `χ_S · v`
    pub fn restrict(&self, set: &CellSet) -> Result<GridFunction> {
        check_same(&self.grid, &set.grid)?;
        Ok(GridFunction::from_vec(
            &self.grid,
            self.values
                .iter()
                .zip(&set.mask)
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect(),
        ))
    }

    /// Writes `midpoint,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["midpoint", "value"])?;
        for (x, v) in self.grid.midpoints().iter().zip(&self.values) {
            w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `midpoint,value` CSV onto `grid`; midpoints must match the grid.
    pub fn read_csv<R: Read>(grid: &Arc<Grid>, reader: R) -> Result<GridFunction> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "midpoint" || &headers[1] != "value" {
            return Err(Error::InvalidArgument(
                "grid function CSV needs header `midpoint,value`".into(),
            ));
        }
        let mut values = Vec::with_capacity(grid.len());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("row {i}: {e}")))
            };
            let x = parse(&rec[0])?;
            let v = parse(&rec[1])?;
            let expected = *grid.midpoints().get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("CSV has more than {} rows", grid.len()))
            })?;
            let tol = 1e-12 * (1.0 + expected.abs());
            if (x - expected).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "row {i}: midpoint {x} does not match grid midpoint {expected}"
                )));
            }
            values.push(v);
        }
        GridFunction::new(grid.clone(), values)
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// A measurable set: a boolean mask over the cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSet {
    grid: Arc<Grid>,
    mask: Vec<bool>,
}

impl CellSet {
    pub fn new(grid: Arc<Grid>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries, grid has {} cells",
                mask.len(),
                grid.len()
            )));
        }
        Ok(CellSet { grid, mask })
    }

    pub fn empty(grid: &Arc<Grid>) -> Self {
        CellSet {
            grid: grid.clone(),
            mask: vec![false; grid.len()],
        }
    }

    pub fn full(grid: &Arc<Grid>) -> Self {
        CellSet {
            grid: grid.clone(),
            mask: vec![true; grid.len()],
        }
    }

    pub fn from_indices(grid: &Arc<Grid>, indices: &[usize]) -> Result<Self> {
        let mut mask = vec![false; grid.len()];
        for &i in indices {
            *mask.get_mut(i).ok_or_else(|| {
                Error::InvalidArgument(format!("cell index {i} out of range 0..{}", grid.len()))
            })? = true;
        }
        Ok(CellSet {
            grid: grid.clone(),
            mask,
        })
    }

    /// Cells whose midpoint satisfies `pred`.
    pub fn from_predicate(grid: &Arc<Grid>, pred: impl Fn(f64) -> bool) -> Self {
        CellSet {
            grid: grid.clone(),
            mask: grid.midpoints().iter().map(|&x| pred(x)).collect(),
        }
    }

    pub(crate) fn from_mask(grid: &Arc<Grid>, mask: Vec<bool>) -> Self {
        debug_assert_eq!(mask.len(), grid.len());
        CellSet {
            grid: grid.clone(),
            mask,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Sum of the weights of the cells in the set.
    pub fn measure(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(w, _)| w)
            .sum()
    }

    fn combine(&self, other: &CellSet, f: impl Fn(bool, bool) -> bool) -> Result<CellSet> {
        check_same(&self.grid, &other.grid)?;
        Ok(CellSet::from_mask(
            &self.grid,
            self.mask.iter().zip(&other.mask).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn union(&self, other: &CellSet) -> Result<CellSet> {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &CellSet) -> Result<CellSet> {
        self.combine(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &CellSet) -> Result<CellSet> {
        self.combine(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> CellSet {
        CellSet::from_mask(&self.grid, self.mask.iter().map(|m| !m).collect())
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        same_grid(&self.grid, &other.grid) && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        same_grid(&self.grid, &other.grid) && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !(a && b))
    }

    /// `χ_S`
    pub fn indicator(&self) -> GridFunction {
        GridFunction::from_vec(
            &self.grid,
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
    }
}
