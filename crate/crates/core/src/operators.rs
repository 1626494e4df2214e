//! Linear operators on grid functions.
//!
//! Adjoints are taken with respect to the weighted inner product of
//! [`GridFunction::inner`], so a dense matrix `M` has adjoint `W⁻¹MᵀW`.
//! The Dirichlet Laplacian uses a cell-centered three-point stencil whose
//! ghost value mirrors the boundary cell (`u_ghost = -u_edge`), which puts the
//! zero boundary value exactly on the interval endpoint and keeps the scheme
//! second order.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{same_grid, Grid, GridFunction};

/// A bounded linear operator `L²(Ω) → L²(Ω)` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub enum LinOp {
    /// `v ↦ d1·v + d2·⟨1, v⟩`
    ScaledIdPlusAverage { d1: f64, d2: f64 },
    /// Dense matrix acting on the value vector.
    Matrix(DMatrix<f64>),
    /// `(-Δ₀)⁻¹` on a uniform grid.
    InverseDirichletLaplacian1D { grid: Arc<Grid> },
    /// `S*S` for the inner operator `S`.
    GramComposition(Box<LinOp>),
    Sum(Vec<LinOp>),
    ScaledIdentity(f64),
}

impl LinOp {
    pub fn identity() -> LinOp {
        LinOp::ScaledIdentity(1.0)
    }

    pub fn inverse_laplacian(grid: &Arc<Grid>) -> Result<LinOp> {
        require_uniform(grid)?;
        Ok(LinOp::InverseDirichletLaplacian1D { grid: grid.clone() })
    }

    pub fn apply(&self, v: &GridFunction) -> Result<GridFunction> {
        self.apply_impl(v, false)
    }

    pub fn apply_adjoint(&self, v: &GridFunction) -> Result<GridFunction> {
        self.apply_impl(v, true)
    }

    fn apply_impl(&self, v: &GridFunction, adjoint: bool) -> Result<GridFunction> {
        let grid = v.grid();
        match self {
            LinOp::ScaledIdPlusAverage { d1, d2 } => {
                let avg = v.integral();
                Ok(v.map(|x| d1 * x + d2 * avg))
            }
            LinOp::ScaledIdentity(a) => Ok(v.scale(*a)),
            LinOp::Matrix(m) => {
                let n = v.len();
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is {}x{}, grid has {n} cells",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let x = nalgebra::DVector::from_column_slice(v.values());
                let out = if adjoint {
                    let w = grid.weights();
                    let wx = nalgebra::DVector::from_iterator(n, x.iter().zip(w).map(|(x, w)| x * w));
                    let y = m.tr_mul(&wx);
                    y.iter().zip(w).map(|(y, w)| y / w).collect()
                } else {
                    (m * x).iter().copied().collect()
                };
                GridFunction::new(grid.clone(), out)
            }
            LinOp::InverseDirichletLaplacian1D { grid: own } => {
                if !same_grid(own, grid) {
                    return Err(Error::InvalidArgument(
                        "inverse Laplacian applied on a foreign grid".into(),
                    ));
                }
                solve_inverse_laplacian(own, v)
            }
            LinOp::GramComposition(inner) => {
                let sv = inner.apply(v)?;
                inner.apply_adjoint(&sv)
            }
            LinOp::Sum(terms) => {
                let mut acc = GridFunction::zeros(grid);
                for t in terms {
                    acc = acc.add(&t.apply_impl(v, adjoint)?)?;
                }
                Ok(acc)
            }
        }
    }

    /// `(d1, d2)` when the operator is of the form `d1·id + d2·⟨1,·⟩`.
    pub fn averaging_form(&self) -> Option<(f64, f64)> {
        match self {
            LinOp::ScaledIdPlusAverage { d1, d2 } => Some((*d1, *d2)),
            LinOp::ScaledIdentity(a) => Some((*a, 0.0)),
            LinOp::Sum(terms) => terms.iter().try_fold((0.0, 0.0), |(a, b), t| {
                t.averaging_form().map(|(c, d)| (a + c, b + d))
            }),
            _ => None,
        }
    }

    /// Operator is known to satisfy `A* = A` without probing.
    pub fn is_structurally_self_adjoint(&self) -> bool {
        match self {
            LinOp::ScaledIdPlusAverage { .. }
            | LinOp::ScaledIdentity(_)
            | LinOp::InverseDirichletLaplacian1D { .. }
            | LinOp::GramComposition(_) => true,
            LinOp::Matrix(_) => false,
            LinOp::Sum(terms) => terms.iter().all(LinOp::is_structurally_self_adjoint),
        }
    }
}

/// `α·id + G`, fused into a single averaging operator when `G` has that form.
pub fn alpha_plus(alpha: f64, gram: LinOp) -> LinOp {
    match gram.averaging_form() {
        Some((d1, d2)) if d2 != 0.0 => LinOp::ScaledIdPlusAverage { d1: alpha + d1, d2 },
        Some((d1, _)) => LinOp::ScaledIdentity(alpha + d1),
        None => LinOp::Sum(vec![LinOp::ScaledIdentity(alpha), gram]),
    }
}

/// Dense matrix of `op` acting on value vectors of `grid` (column `j` is `op(e_j)`).
pub fn assemble_dense(op: &LinOp, grid: &Arc<Grid>) -> Result<DMatrix<f64>> {
    assemble(op, grid, false)
}

/// Dense matrix of the weighted adjoint `op*`.
pub fn assemble_dense_adjoint(op: &LinOp, grid: &Arc<Grid>) -> Result<DMatrix<f64>> {
    assemble(op, grid, true)
}

fn assemble(op: &LinOp, grid: &Arc<Grid>, adjoint: bool) -> Result<DMatrix<f64>> {
    let n = grid.len();
    match (op, adjoint) {
        (LinOp::Matrix(m), false) if m.nrows() == n && m.ncols() == n => return Ok(m.clone()),
        (LinOp::ScaledIdPlusAverage { .. } | LinOp::ScaledIdentity(_), _) => {
            let (d1, d2) = op.averaging_form().expect("averaging variant");
            let w = grid.weights();
            return Ok(DMatrix::from_fn(n, n, |i, j| {
                d2 * w[j] + if i == j { d1 } else { 0.0 }
            }));
        }
        _ => {}
    }
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply_impl(&GridFunction::from_vec(grid, e.clone()), adjoint)?;
        out.column_mut(j).copy_from_slice(col.values());
        e[j] = 0.0;
    }
    Ok(out)
}

/// `A*` maps nonnegative functions to nonnegative functions.
pub fn check_nonneg_preserving(op: &LinOp, grid: &Arc<Grid>) -> Result<bool> {
    let m = assemble_dense_adjoint(op, grid)?;
    Ok(m.iter().all(|&x| x >= -1e-12))
}

fn require_uniform(grid: &Grid) -> Result<f64> {
    grid.uniform_width()
        .ok_or_else(|| Error::InvalidArgument("operation needs a uniform grid".into()))
}

/// `-Δ_h` with homogeneous Dirichlet data on a uniform cell-centered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaplacian1D {
    grid: Arc<Grid>,
    h: f64,
}

impl DiscreteLaplacian1D {
    pub fn new(grid: &Arc<Grid>) -> Result<Self> {
        let h = require_uniform(grid)?;
        Ok(DiscreteLaplacian1D { grid: grid.clone(), h })
    }

    /// `(-u_{i-1} + 2u_i - u_{i+1}) / h²` with mirrored ghost cells.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if !same_grid(&self.grid, u.grid()) {
            return Err(Error::InvalidArgument("Laplacian applied on a foreign grid".into()));
        }
        let v = u.values();
        let n = v.len();
        let h2 = self.h * self.h;
        let out = (0..n)
            .map(|i| {
                let left = if i == 0 { -v[0] } else { v[i - 1] };
                let right = if i + 1 == n { -v[n - 1] } else { v[i + 1] };
                (2.0 * v[i] - left - right) / h2
            })
            .collect();
        GridFunction::new(self.grid.clone(), out)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
}

/// Solves `-Δ_h u = rhs` by the Thomas algorithm.
pub fn solve_inverse_laplacian(grid: &Arc<Grid>, rhs: &GridFunction) -> Result<GridFunction> {
    let h = require_uniform(grid)?;
    if !same_grid(grid, rhs.grid()) {
        return Err(Error::InvalidArgument("right-hand side lives on another grid".into()));
    }
    let n = grid.len();
    let h2 = h * h;
    let diag = |i: usize| if n == 1 { 4.0 } else if i == 0 || i + 1 == n { 3.0 } else { 2.0 };
    // Forward sweep on the scaled system (h² b) with off-diagonals -1.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let b = rhs.values();
    let mut denom = diag(0);
    c[0] = -1.0 / denom;
    d[0] = h2 * b[0] / denom;
    for i in 1..n {
        denom = diag(i) + c[i - 1];
        c[i] = -1.0 / denom;
        d[i] = (h2 * b[i] + d[i - 1]) / denom;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d[n - 1];
    for i in (0..n.saturating_sub(1)).rev() {
        u[i] = d[i] - c[i] * u[i + 1];
    }
    GridFunction::new(grid.clone(), u)
}

/// `⟨-Δ_h w, w⟩`: squared jumps over interior edges plus the two half-width
/// boundary edges.
pub fn h1_seminorm_sq(grid: &Arc<Grid>, w: &GridFunction) -> Result<f64> {
    let h = require_uniform(grid)?;
    if !same_grid(grid, w.grid()) {
        return Err(Error::InvalidArgument("function lives on another grid".into()));
    }
    let v = w.values();
    let n = v.len();
    let interior: f64 = v.windows(2).map(|p| (p[1] - p[0]).powi(2) / h).sum();
    let boundary = (v[0].powi(2) + v[n - 1].powi(2)) / (h / 2.0);
    Ok(interior + boundary)
}
