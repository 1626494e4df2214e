//! Penalty regularization of the lower level.
//!
//! `e_γ(u, w) = S*(Su - y_d) + α(u - w) + γπ(u - u_a) = 0` replaces the
//! obstacle problem. Its solution map `T_γ` is differentiable, which gives a
//! derivative system, an adjoint and a projected-gradient loop for the upper
//! level.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::ioc::IocProblem;
use crate::lower_level::solve_oc;
use crate::operators::{assemble_dense, h1_seminorm_sq};

const NEWTON_MAX_ITER: usize = 200;
const NEWTON_TOL: f64 = 1e-11;
const HALVINGS: usize = 60;
/// Extra Newton steps once the tolerance is met, taken while they still
/// reduce the residual.
const POLISH_STEPS: usize = 2;

/// `π(s)`: `s + ½` for `s ≤ -1`, `-½s²` on `(-1, 0)`, `0` for `s ≥ 0`.
pub fn pi_eval(s: f64) -> f64 {
    if s <= -1.0 {
        s + 0.5
    } else if s < 0.0 {
        -0.5 * s * s
    } else {
        0.0
    }
}

pub fn pi_prime(s: f64) -> f64 {
    if s <= -1.0 {
        1.0
    } else if s < 0.0 {
        -s
    } else {
        0.0
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("γ must be positive, got {gamma}")))
    }
}

/// Dense `αI + S*S` and `S*y_d`, shared by every Newton step at one `w`.
struct Regularized<'a> {
    ioc: &'a IocProblem,
    hessian: DMatrix<f64>,
    rhs: GridFunction,
    gamma: f64,
}

impl<'a> Regularized<'a> {
    fn new(ioc: &'a IocProblem, w: &GridFunction, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Regularized {
            ioc,
            hessian: assemble_dense(&ioc.hessian(), &ioc.grid)?,
            rhs: ioc.s_adj_yd()?.add(&w.scale(ioc.alpha))?,
            gamma,
        })
    }

    fn residual(&self, u: &GridFunction) -> Result<Vec<f64>> {
        let au = &self.hessian * nalgebra::DVector::from_column_slice(u.values());
        Ok((0..u.len())
            .map(|i| au[i] - self.rhs.values()[i] + self.gamma * pi_eval(u.values()[i] - self.ioc.u_a.values()[i]))
            .collect())
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `(αI + S*S + γ·diag π′(u - u_a)) x = b`.
fn jacobian_solve(hessian: &DMatrix<f64>, ioc: &IocProblem, u: &GridFunction, gamma: f64, b: &[f64]) -> Result<Vec<f64>> {
    let mut j = hessian.clone();
    for i in 0..u.len() {
        j[(i, i)] += gamma * pi_prime(u.values()[i] - ioc.u_a.values()[i]);
    }
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = match j.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => j
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Internal("regularized Jacobian is singular".into()))?,
    };
    Ok(x.iter().copied().collect())
}

/// Solves `e_γ(u, w) = 0` from `max(u_a, w)`.
pub fn solve_regularized(ioc: &IocProblem, w: &GridFunction, gamma: f64) -> Result<GridFunction> {
    let start = ioc.u_a.zip_map(w, f64::max)?;
    solve_regularized_from(ioc, w, gamma, &start).map(|(u, _)| u)
}

/// Damped semismooth Newton from `u0`; returns the solution and the number
/// of Newton steps needed to meet the tolerance.
pub fn solve_regularized_from(
    ioc: &IocProblem,
    w: &GridFunction,
    gamma: f64,
    u0: &GridFunction,
) -> Result<(GridFunction, usize)> {
    let reg = Regularized::new(ioc, w, gamma)?;
    let tol = NEWTON_TOL * (1.0 + gamma);
    let mut u = u0.clone();
    let mut r = reg.residual(&u)?;
    let mut history = vec![max_abs(&r)];
    let mut converged_at = None;
    for it in 0..NEWTON_MAX_ITER {
        let norm = max_abs(&r);
        if norm <= tol && converged_at.is_none() {
            converged_at = Some(it);
        }
        if converged_at.is_some_and(|c| it >= c + POLISH_STEPS) {
            return Ok((u, converged_at.unwrap_or(it)));
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = jacobian_solve(&reg.hessian, ioc, &u, gamma, &neg_r)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..HALVINGS {
            let trial = GridFunction::new(
                ioc.grid.clone(),
                u.values().iter().zip(&d).map(|(x, dx)| x + t * dx).collect(),
            )?;
            let rt = reg.residual(&trial)?;
            if max_abs(&rt) < norm {
                accepted = Some((trial, rt));
                break;
            }
            t *= 0.5;
        }
        let Some((next, rn)) = accepted else {
            if let Some(c) = converged_at {
                return Ok((u, c));
            }
            return Err(Error::SolverFailure {
                reason: format!("no decrease along the Newton direction at γ = {gamma:e}"),
                trace: history,
            });
        };
        u = next;
        r = rn;
        history.push(max_abs(&r));
    }
    if let Some(c) = converged_at {
        return Ok((u, c));
    }
    Err(Error::SolverFailure {
        reason: format!("Newton did not converge in {NEWTON_MAX_ITER} iterations at γ = {gamma:e}"),
        trace: history,
    })
}

/// `v = T_γ′(w)h`: `S*Sv + α(v - h) + γπ′(u - u_a)v = 0`.
pub fn t_gamma_derivative(ioc: &IocProblem, u: &GridFunction, gamma: f64, h: &GridFunction) -> Result<GridFunction> {
    check_gamma(gamma)?;
    let hess = assemble_dense(&ioc.hessian(), &ioc.grid)?;
    let b: Vec<f64> = h.values().iter().map(|v| ioc.alpha * v).collect();
    GridFunction::new(ioc.grid.clone(), jacobian_solve(&hess, ioc, u, gamma, &b)?)
}

/// `(αI + S*S + γπ′(u - u_a))p = -αf′(u)`. With this sign
/// `⟨f′(u), T_γ′(w)h⟩ = -⟨p, h⟩`.
pub fn adjoint_solve(ioc: &IocProblem, u: &GridFunction, gamma: f64) -> Result<GridFunction> {
    check_gamma(gamma)?;
    let hess = assemble_dense(&ioc.hessian(), &ioc.grid)?;
    let b: Vec<f64> = ioc.f_prime(u)?.values().iter().map(|v| -ioc.alpha * v).collect();
    GridFunction::new(ioc.grid.clone(), jacobian_solve(&hess, ioc, u, gamma, &b)?)
}

/// `γ_k = gamma0·factor^k` for `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub gamma0: f64,
    pub factor: f64,
    pub steps: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { gamma0: 1.0, factor: 10.0, steps: 9 }
    }
}

impl Schedule {
    pub fn gammas(&self) -> Result<Vec<f64>> {
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite() && self.factor > 1.0 && self.factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "schedule needs gamma0 > 0 and factor > 1, got {} and {}",
                self.gamma0, self.factor
            )));
        }
        Ok((0..=self.steps).map(|k| self.gamma0 * self.factor.powi(k as i32)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegPathReport {
    pub gammas: Vec<f64>,
    /// `‖u_γ - u*‖` in the weighted L² norm.
    pub errors_to_vi: Vec<f64>,
    pub newton_iters: Vec<usize>,
    /// Values of the upper-level iterate when a descent loop produced one.
    pub final_w: Option<Vec<f64>>,
    pub adjoint_norms: Vec<f64>,
}

impl RegPathReport {
    /// Columns `gamma,error,newton_iters`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(writer);
        wr.write_record(["gamma", "error", "newton_iters"])?;
        for k in 0..self.gammas.len() {
            wr.write_record([
                format!("{:e}", self.gammas[k]),
                format!("{:e}", self.errors_to_vi[k]),
                self.newton_iters[k].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Follows `γ → ∞` at fixed `w`, warm-starting each solve from the last.
pub fn run_reg_path(ioc: &IocProblem, w: &GridFunction, schedule: Schedule) -> Result<RegPathReport> {
    let gammas = schedule.gammas()?;
    let u_star = solve_oc(ioc, w)?.u;
    let mut u = ioc.u_a.zip_map(w, f64::max)?;
    let mut report = RegPathReport {
        gammas: gammas.clone(),
        errors_to_vi: Vec::with_capacity(gammas.len()),
        newton_iters: Vec::with_capacity(gammas.len()),
        final_w: None,
        adjoint_norms: Vec::with_capacity(gammas.len()),
    };
    for &gamma in &gammas {
        let (next, iters) = solve_regularized_from(ioc, w, gamma, &u)?;
        u = next;
        report.errors_to_vi.push(u.sub(&u_star)?.norm());
        report.newton_iters.push(iters);
        report.adjoint_norms.push(adjoint_solve(ioc, &u, gamma)?.norm());
    }
    Ok(report)
}

/// Step-size control of the projected-gradient loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    /// First trial step.
    pub initial: f64,
    /// Barzilai–Borwein trial steps after the first iteration.
    pub barzilai_borwein: bool,
    /// Armijo constant of the backtracking test.
    pub armijo: f64,
    pub max_iter: usize,
    /// Stop once `‖w - max(w_a, w - g)‖` falls below this.
    pub tol: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            initial: 1.0,
            barzilai_borwein: true,
            armijo: 1e-4,
            max_iter: 5000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedIoc {
    pub w: GridFunction,
    pub u: GridFunction,
    /// Reduced objective at every accepted iterate, the start included.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub stationarity: f64,
}

/// `f(T_γ(w)) + ½|w|²_{H¹} + ⟨ζ, w⟩` together with `T_γ(w)`.
fn reduced_objective(ioc: &IocProblem, w: &GridFunction, gamma: f64, warm: &GridFunction) -> Result<(f64, GridFunction)> {
    let (u, _) = solve_regularized_from(ioc, w, gamma, warm)?;
    let j = ioc.f_value(&u)? + 0.5 * h1_seminorm_sq(&ioc.grid, w)? + ioc.zeta.inner(w)?;
    Ok((j, u))
}

/// `-Δ_h w + ζ - p` with `p` the adjoint at `u = T_γ(w)`.
fn reduced_gradient(ioc: &IocProblem, w: &GridFunction, u: &GridFunction, gamma: f64) -> Result<GridFunction> {
    let p = adjoint_solve(ioc, u, gamma)?;
    ioc.neg_laplacian(w)?.add(&ioc.zeta)?.sub(&p)
}

fn project(ioc: &IocProblem, w: &GridFunction) -> Result<GridFunction> {
    ioc.w_a.zip_map(w, f64::max)
}

/// Projected gradient for the regularized upper level at fixed `γ`.
pub fn solve_ioc_regularized(ioc: &IocProblem, w0: &GridFunction, gamma: f64, rule: StepRule) -> Result<RegularizedIoc> {
    check_gamma(gamma)?;
    let below = w0.zip_map(&ioc.w_a, |w, a| (a - w).max(0.0))?.max_abs();
    if below > 0.0 {
        return Err(Error::InvalidArgument(format!("w0 lies below w_a by {below:e}")));
    }
    let mut w = w0.clone();
    let start = ioc.u_a.zip_map(&w, f64::max)?;
    let (mut j, mut u) = reduced_objective(ioc, &w, gamma, &start)?;
    let mut g = reduced_gradient(ioc, &w, &u, gamma)?;
    let mut objectives = vec![j];
    let mut step = rule.initial;
    for it in 0..rule.max_iter {
        let stat = w.sub(&project(ioc, &w.sub(&g)?)?)?.norm();
        if stat <= rule.tol {
            return Ok(RegularizedIoc { w, u, objectives, iterations: it, stationarity: stat });
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..HALVINGS {
            let trial = project(ioc, &w.sub(&g.scale(t))?)?;
            let d = trial.sub(&w)?;
            let (jt, ut) = reduced_objective(ioc, &trial, gamma, &u)?;
            if jt <= j - rule.armijo / t * d.norm().powi(2) {
                accepted = Some((trial, jt, ut));
                break;
            }
            t *= 0.5;
        }
        let Some((w_next, j_next, u_next)) = accepted else {
            return Err(Error::ConvergenceFailure { iterations: it, last: stat });
        };
        let g_next = reduced_gradient(ioc, &w_next, &u_next, gamma)?;
        let s = w_next.sub(&w)?;
        let y = g_next.sub(&g)?;
        step = if rule.barzilai_borwein {
            let sy = s.inner(&y)?;
            if sy > 0.0 {
                (s.inner(&s)? / sy).clamp(1e-12, 1e12)
            } else {
                rule.initial
            }
        } else {
            rule.initial
        };
        w = w_next;
        u = u_next;
        j = j_next;
        g = g_next;
        objectives.push(j);
    }
    let stat = w.sub(&project(ioc, &w.sub(&g)?)?)?.norm();
    if stat <= rule.tol {
        return Ok(RegularizedIoc { w, u, objectives, iterations: rule.max_iter, stationarity: stat });
    }
    Err(Error::ConvergenceFailure { iterations: rule.max_iter, last: stat })
}
