//! The lower-level obstacle problem
//! `min ½‖Su - y_d‖² + α/2‖u - w‖²` s.t. `u ≥ u_a`, its multiplier
//! `ξ = S*(Su - y_d) + α(u - w)` and directional derivatives of `w ↦ u`.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::ioc::IocProblem;
use crate::operators::assemble_dense;
use crate::qp::{pdas_dense, qp_box_solve, BoxConstraint, QpBoxProblem};
use crate::stationarity::{classify_active_sets, ActiveSets};

/// Tolerance for classifying cells and cross-checking the dual.
pub const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LowerLevelSolution {
    pub u: GridFunction,
    pub xi: GridFunction,
    pub vi_residual: f64,
    pub active_sets: ActiveSets,
}

/// Solves the lower level at `w`.
pub fn solve_oc(ioc: &IocProblem, w: &GridFunction) -> Result<LowerLevelSolution> {
    let g = &ioc.grid;
    let n = g.len();
    let (u, active) = if ioc.observation_is_zero() {
        let u = ioc.u_a.zip_map(w, f64::max)?;
        let active = (0..n).map(|i| ioc.u_a.values()[i] >= w.values()[i]).collect::<Vec<_>>();
        (u, active)
    } else {
        let linear = ioc.s_adj_yd()?.add(&w.scale(ioc.alpha))?.scale(-1.0);
        let sol = qp_box_solve(&QpBoxProblem {
            hessian: ioc.hessian(),
            linear,
            lower_bound: ioc.u_a.values().to_vec(),
        })?;
        let xi = ioc.xi_of(&sol.u, w)?;
        let gap = xi.sub(&sol.xi)?.max_abs();
        if gap > ACTIVE_TOL * (1.0 + sol.xi.max_abs()) {
            return Err(Error::Internal(format!("ξ from its formula differs from the QP dual by {gap:e}")));
        }
        (sol.u, sol.active)
    };
    // on the solver's inactive cells ξ vanishes up to rounding; make the
    // complementarity exact there
    let xi_raw = ioc.xi_of(&u, w)?;
    let xi = GridFunction::new(
        g.clone(),
        (0..n).map(|i| if active[i] { xi_raw.values()[i].max(0.0) } else { 0.0 }).collect(),
    )?;
    let drift = (0..n)
        .filter(|&i| !active[i])
        .map(|i| xi_raw.values()[i].abs())
        .fold(0.0, f64::max);
    if drift > ACTIVE_TOL * (1.0 + xi_raw.max_abs()) {
        return Err(Error::Internal(format!("ξ does not vanish off the active set ({drift:e})")));
    }
    let vi_residual = vi_residual(ioc, w, &u)?;
    let active_sets = classify_active_sets(&u, &xi, &ioc.u_a, ACTIVE_TOL)?;
    Ok(LowerLevelSolution {
        u,
        xi,
        vi_residual,
        active_sets,
    })
}

/// `max_i max((u_a - u)⁺, (-ξ)⁺, |min(u - u_a, ξ)|)` with `ξ` from its
/// formula.
pub fn vi_residual(ioc: &IocProblem, w: &GridFunction, u: &GridFunction) -> Result<f64> {
    let xi = ioc.xi_of(u, w)?;
    let gap = u.sub(&ioc.u_a)?;
    Ok(gap
        .values()
        .iter()
        .zip(xi.values())
        .map(|(&s, &x)| (-s).max(0.0).max((-x).max(0.0)).max(s.min(x).abs()))
        .fold(0.0, f64::max))
}

/// `T'(w̄; h)`: minimizes `½⟨(αI + S*S)z, z⟩ - α⟨h, z⟩` over the critical
/// cone `{z = 0 where ξ̄ > 0, z ≥ 0 on the biactive set}`.
pub fn directional_derivative(
    ioc: &IocProblem,
    sol: &LowerLevelSolution,
    h: &GridFunction,
) -> Result<GridFunction> {
    let g = &ioc.grid;
    let n = g.len();
    let cons: Vec<BoxConstraint> = (0..n)
        .map(|i| {
            if sol.active_sets.strongly_active.contains(i) {
                BoxConstraint::Fixed(0.0)
            } else if sol.active_sets.biactive.contains(i) {
                BoxConstraint::Lower(0.0)
            } else {
                BoxConstraint::Free
            }
        })
        .collect();
    if ioc.observation_is_zero() {
        let z = (0..n)
            .map(|i| match cons[i] {
                BoxConstraint::Fixed(_) => 0.0,
                BoxConstraint::Lower(_) => h.values()[i].max(0.0),
                BoxConstraint::Free => h.values()[i],
            })
            .collect();
        return GridFunction::new(g.clone(), z);
    }
    let a = assemble_dense(&ioc.hessian(), g)?;
    let q: Vec<f64> = h.values().iter().map(|v| -ioc.alpha * v).collect();
    let s = pdas_dense(&a, &q, &cons)?;
    GridFunction::new(g.clone(), s.x)
}
