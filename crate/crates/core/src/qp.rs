//! Box-constrained strictly convex quadratic programs by a primal-dual active
//! set iteration.
//!
//! `min ½⟨Hu, u⟩ + ⟨q, u⟩` subject to `u ≥ lower`, with `H` self-adjoint and
//! positive definite in the weighted inner product. The optimality system is
//! `Hu + q - ξ = 0`, `u ≥ lower`, `ξ ≥ 0`, `ξ·(u - lower) = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::operators::{assemble_dense, LinOp};

pub const MAX_PDAS_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct QpBoxProblem {
    pub hessian: LinOp,
    pub linear: GridFunction,
    /// Entries may be `-∞`.
    pub lower_bound: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: GridFunction,
    /// Multiplier of the bound, zero off the final active set.
    pub xi: GridFunction,
    pub active: Vec<bool>,
    pub iterations: usize,
}

/// Per-variable constraint of a dense box QP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxConstraint {
    Free,
    Lower(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQpSolution {
    pub x: Vec<f64>,
    pub multiplier: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
}

/// PDAS on `min ½xᵀHx + qᵀx` in coordinates, where `H x + q - ξ = 0` is the
/// optimality condition (the caller passes `H` and `q` already in the form
/// whose stationarity reads that way). `ξ` is zero on free and inactive
/// variables and equals `(Hx + q)_i` on active and fixed ones.
pub fn pdas_dense(h: &DMatrix<f64>, q: &[f64], cons: &[BoxConstraint]) -> Result<DenseQpSolution> {
    let n = q.len();
    if h.nrows() != n || h.ncols() != n || cons.len() != n {
        return Err(Error::InvalidArgument(format!(
            "QP dimensions disagree: H is {}x{}, q has {n}, {} constraints",
            h.nrows(),
            h.ncols(),
            cons.len()
        )));
    }
    // Start from the problem with only the fixed variables.
    let mut active = vec![false; n];
    let (x0, _) = solve_with_active(h, q, cons, &active)?;
    for i in 0..n {
        if let BoxConstraint::Lower(l) = cons[i] {
            active[i] = x0[i] < l;
        }
    }
    for it in 1..=MAX_PDAS_ITERATIONS {
        let (x, xi) = solve_with_active(h, q, cons, &active)?;
        let next: Vec<bool> = (0..n)
            .map(|i| match cons[i] {
                BoxConstraint::Lower(l) => xi[i] + (l - x[i]) > 0.0,
                _ => false,
            })
            .collect();
        if next == active {
            return Ok(DenseQpSolution {
                x,
                multiplier: xi,
                active,
                iterations: it,
            });
        }
        active = next;
    }
    Err(Error::SolverFailure {
        reason: format!("active set iteration did not settle in {MAX_PDAS_ITERATIONS} steps"),
        trace: active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect(),
    })
}

fn solve_with_active(
    h: &DMatrix<f64>,
    q: &[f64],
    cons: &[BoxConstraint],
    active: &[bool],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = q.len();
    let mut x = vec![0.0; n];
    let mut free = Vec::with_capacity(n);
    for i in 0..n {
        match cons[i] {
            BoxConstraint::Fixed(v) => x[i] = v,
            BoxConstraint::Lower(l) if active[i] => x[i] = l,
            _ => free.push(i),
        }
    }
    if !free.is_empty() {
        let k = free.len();
        let sub = DMatrix::from_fn(k, k, |r, c| h[(free[r], free[c])]);
        let rhs = DVector::from_iterator(
            k,
            free.iter().map(|&i| {
                -q[i] - (0..n).filter(|&j| x[j] != 0.0).map(|j| h[(i, j)] * x[j]).sum::<f64>()
            }),
        );
        let sol = sub
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SolverFailure {
                reason: "reduced Hessian is singular".into(),
                trace: Vec::new(),
            })?;
        for (r, &i) in free.iter().enumerate() {
            x[i] = sol[r];
        }
    }
    let hx = h * DVector::from_column_slice(&x);
    let mut xi = vec![0.0; n];
    for i in 0..n {
        let bound_held = matches!(cons[i], BoxConstraint::Fixed(_))
            || matches!(cons[i], BoxConstraint::Lower(_)) && active[i];
        if bound_held {
            xi[i] = hx[i] + q[i];
        }
    }
    Ok((x, xi))
}

/// Solves the box QP on a grid.
pub fn qp_box_solve(p: &QpBoxProblem) -> Result<QpSolution> {
    let grid = p.linear.grid();
    let n = grid.len();
    if p.lower_bound.len() != n {
        return Err(Error::InvalidArgument(format!(
            "lower bound has {} entries, grid has {n} cells",
            p.lower_bound.len()
        )));
    }
    if p.lower_bound.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::InvalidArgument("lower bound entries must be < +∞".into()));
    }
    let h = assemble_dense(&p.hessian, grid)?;
    let cons: Vec<BoxConstraint> = p
        .lower_bound
        .iter()
        .map(|&l| if l.is_finite() { BoxConstraint::Lower(l) } else { BoxConstraint::Free })
        .collect();
    let sol = pdas_dense(&h, p.linear.values(), &cons)?;
    let u = GridFunction::new(grid.clone(), sol.x)?;
    let xi = GridFunction::new(grid.clone(), sol.multiplier)?;
    let res = p.hessian.apply(&u)?.add(&p.linear)?.sub(&xi)?.max_abs();
    let scale = 1.0 + p.linear.max_abs() + xi.max_abs();
    if res > 1e-10 * scale {
        log::warn!("box QP residual {res:e} exceeds 1e-10 relative");
    }
    log::debug!("box QP solved in {} active-set iterations", sol.iterations);
    Ok(QpSolution {
        u,
        xi,
        active: sol.active,
        iterations: sol.iterations,
    })
}
