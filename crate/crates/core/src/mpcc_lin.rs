//! The linear complementarity problem at the origin.
//!
//! ```text
//! min ⟨F_u,u⟩ + ⟨F_w,w⟩ + ⟨F_ξ,ξ⟩   s.t.  Au - w - ξ = 0,
//!     u = 0 on Ω⁰⁺,  0 ≤ u ⊥ ξ ≥ 0 on Ω⁰⁰,  ξ = 0 on Ω⁺⁰,  w ≥ 0 on Ω_w
//! ```
//!
//! For a subset `β` of the biactive set the complementarity is tightened to
//! `u ≥ 0, ξ = 0` off `β` and `u = 0, ξ ≥ 0` on `β`. The KKT system of that
//! tightened LP at the origin is the A_β system; this module assembles both
//! as dense LPs and provides the bound function `c₀`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{same_grid, CellSet, Grid, GridFunction};
use crate::lp::{lp_solve, LpProblem, LpResult, LpStatus};
use crate::operators::{assemble_dense, assemble_dense_adjoint, LinOp};
use serde::Serialize;

const INF: f64 = f64::INFINITY;

/// Data of the linear MPCC.
#[derive(Debug, Clone)]
pub struct MpccLinProblem {
    pub a_op: LinOp,
    pub f_u: GridFunction,
    pub f_w: GridFunction,
    pub f_xi: GridFunction,
    pub omega_0p: CellSet,
    pub omega_00: CellSet,
    pub omega_p0: CellSet,
    pub omega_w: CellSet,
}

impl MpccLinProblem {
    /// Checks the partition and that everything lives on one grid.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_op: LinOp,
        f_u: GridFunction,
        f_w: GridFunction,
        f_xi: GridFunction,
        omega_0p: CellSet,
        omega_00: CellSet,
        omega_p0: CellSet,
        omega_w: CellSet,
    ) -> Result<Self> {
        let g = f_u.grid().clone();
        let grids = [f_w.grid(), f_xi.grid(), omega_0p.grid(), omega_00.grid(), omega_p0.grid(), omega_w.grid()];
        if grids.iter().any(|h| !same_grid(&g, h)) {
            return Err(Error::InvalidArgument("problem data lives on different grids".into()));
        }
        for i in 0..g.len() {
            let k = [&omega_0p, &omega_00, &omega_p0].iter().filter(|s| s.contains(i)).count();
            if k != 1 {
                return Err(Error::InvalidArgument(format!(
                    "cell {i} lies in {k} of the three partition sets"
                )));
            }
        }
        Ok(MpccLinProblem {
            a_op,
            f_u,
            f_w,
            f_xi,
            omega_0p,
            omega_00,
            omega_p0,
            omega_w,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.f_u.grid()
    }

    pub fn n(&self) -> usize {
        self.grid().len()
    }

    pub fn check_beta(&self, beta: &CellSet) -> Result<()> {
        if !beta.is_subset(&self.omega_00) {
            return Err(Error::InvalidArgument("β must be a subset of the biactive set".into()));
        }
        Ok(())
    }
}

/// Multipliers `(p, μ, ν, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktMultipliers {
    pub p: GridFunction,
    pub mu: GridFunction,
    pub nu: GridFunction,
    pub lam: GridFunction,
}

impl KktMultipliers {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let z = GridFunction::zeros(grid);
        KktMultipliers {
            p: z.clone(),
            mu: z.clone(),
            nu: z.clone(),
            lam: z,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.p.grid()
    }

    /// `Σ_k ω_k m_k` applied to all four components.
    pub fn combine(weights: &[f64], members: &[&KktMultipliers]) -> Result<KktMultipliers> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot combine an empty family".into()))?;
        if weights.len() != members.len() {
            return Err(Error::InvalidArgument("one weight per member required".into()));
        }
        let grid = first.grid().clone();
        let n = grid.len();
        let mut acc = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (&w, m) in weights.iter().zip(members) {
            if !same_grid(&grid, m.grid()) {
                return Err(Error::InvalidArgument("family members live on different grids".into()));
            }
            for (a, f) in acc.iter_mut().zip([&m.p, &m.mu, &m.nu, &m.lam]) {
                for (a, v) in a.iter_mut().zip(f.values()) {
                    *a += w * v;
                }
            }
        }
        let [p, mu, nu, lam] = acc;
        Ok(KktMultipliers {
            p: GridFunction::new(grid.clone(), p)?,
            mu: GridFunction::new(grid.clone(), mu)?,
            nu: GridFunction::new(grid.clone(), nu)?,
            lam: GridFunction::new(grid, lam)?,
        })
    }

    /// `max(|p|, |μ|, |ν|, |λ|)` per cell.
    pub fn pointwise_max_abs(&self) -> GridFunction {
        let v = (0..self.p.len())
            .map(|i| {
                [&self.p, &self.mu, &self.nu, &self.lam]
                    .iter()
                    .map(|f| f.values()[i].abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        GridFunction::from_vec(self.grid(), v)
    }
}

/// `c₀ = A*(|F_u|+|F_w|+|F_ξ|) + |F_u|+|F_w|+|F_ξ|`.
pub fn compute_c0(prob: &MpccLinProblem) -> Result<GridFunction> {
    let s = prob.f_u.abs().add(&prob.f_w.abs())?.add(&prob.f_xi.abs())?;
    prob.a_op.apply_adjoint(&s)?.add(&s)
}

/// Which sign conditions the multipliers `(μ, ν)` obey on the biactive set.
#[derive(Debug, Clone, Copy)]
pub enum SignSystem<'a> {
    /// No sign condition on the biactive set.
    Weak,
    /// `μ ≤ 0` on `Ω⁰⁰ \ β`, `ν ≤ 0` on `β`.
    Beta(&'a CellSet),
    /// `μ ≤ 0` and `ν ≤ 0` on the biactive set.
    Strong,
    /// One closed M-branch per biactive cell, in increasing cell order.
    Pattern(&'a [CellSign]),
}

/// Closed branch of the M-disjunction at one biactive cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSign {
    BothNonpositive,
    MuZero,
    NuZero,
}

impl CellSign {
    pub const ALL: [CellSign; 3] = [CellSign::BothNonpositive, CellSign::MuZero, CellSign::NuZero];
}

impl MpccLinProblem {
    /// Per-cell sign conditions `(μ ≤ 0, ν ≤ 0, μ = 0, ν = 0)` on the
    /// biactive set.
    pub(crate) fn sign_flags(&self, signs: SignSystem<'_>) -> Result<Vec<[bool; 4]>> {
        let n = self.n();
        let mut flags = vec![[false; 4]; n];
        match signs {
            SignSystem::Weak => {}
            SignSystem::Beta(beta) => {
                self.check_beta(beta)?;
                for i in self.omega_00.indices() {
                    flags[i] = if beta.contains(i) { [false, true, false, false] } else { [true, false, false, false] };
                }
            }
            SignSystem::Strong => {
                for i in self.omega_00.indices() {
                    flags[i] = [true, true, false, false];
                }
            }
            SignSystem::Pattern(pattern) => {
                let cells = self.omega_00.indices();
                if pattern.len() != cells.len() {
                    return Err(Error::InvalidArgument(format!(
                        "pattern has {} entries, biactive set has {} cells",
                        pattern.len(),
                        cells.len()
                    )));
                }
                for (&i, s) in cells.iter().zip(pattern) {
                    flags[i] = match s {
                        CellSign::BothNonpositive => [true, true, false, false],
                        CellSign::MuZero => [false, false, true, false],
                        CellSign::NuZero => [false, false, false, true],
                    };
                }
            }
        }
        Ok(flags)
    }
}

fn lp_beta(prob: &MpccLinProblem, beta: &CellSet) -> Result<LpProblem> {
    prob.check_beta(beta)?;
    let g = prob.grid().clone();
    let n = g.len();
    let a = assemble_dense(&prob.a_op, &g)?;
    let mut lp = LpProblem::new(3 * n);
    let w = g.weights();
    for i in 0..n {
        let (u, wv, xi) = (i, n + i, 2 * n + i);
        lp.objective[u] = w[i] * prob.f_u.values()[i];
        lp.objective[wv] = w[i] * prob.f_w.values()[i];
        lp.objective[xi] = w[i] * prob.f_xi.values()[i];

        let in_beta = beta.contains(i);
        lp.var_bounds[u] = if prob.omega_0p.contains(i) || in_beta {
            (0.0, 0.0)
        } else if prob.omega_00.contains(i) {
            (0.0, INF)
        } else {
            (-INF, INF)
        };
        lp.var_bounds[xi] = if in_beta {
            (0.0, INF)
        } else if prob.omega_0p.contains(i) {
            (-INF, INF)
        } else {
            (0.0, 0.0)
        };
        if prob.omega_w.contains(i) {
            lp.var_bounds[wv] = (0.0, INF);
        }

        let mut row = vec![0.0; 3 * n];
        for j in 0..n {
            row[j] = a[(i, j)];
        }
        row[wv] = -1.0;
        row[xi] = -1.0;
        lp.add_row(row, 0.0);
    }
    Ok(lp)
}

/// Solves the tightened LP over `(u, w, ξ)`; the point is laid out as
/// `[u | w | ξ]`.
pub fn solve_lp_beta(prob: &MpccLinProblem, beta: &CellSet) -> Result<LpResult> {
    lp_solve(&lp_beta(prob, beta)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum KktOutcome {
    Found(KktMultipliers),
    Infeasible,
}

impl KktOutcome {
    pub fn found(self) -> Option<KktMultipliers> {
        match self {
            KktOutcome::Found(m) => Some(m),
            KktOutcome::Infeasible => None,
        }
    }
}

/// Builds the multiplier LP. Variables are `[p | μ | ν | λ]`, or
/// `[p⁺ | p⁻ | μ | ν | λ]` when `split_p` is set.
fn multiplier_lp(prob: &MpccLinProblem, signs: SignSystem<'_>, split_p: bool) -> Result<LpProblem> {
    let flags = prob.sign_flags(signs)?;
    let g = prob.grid().clone();
    let n = g.len();
    let a_adj = assemble_dense_adjoint(&prob.a_op, &g)?;
    let np = if split_p { 2 } else { 1 };
    let (mu0, nu0, lam0) = (np * n, (np + 1) * n, (np + 2) * n);
    let nv = (np + 3) * n;
    let mut lp = LpProblem::new(nv);

    // Coefficient of p_j in a row is c; with a split it becomes (c, -c).
    let put_p = |row: &mut Vec<f64>, j: usize, c: f64| {
        row[j] += c;
        if split_p {
            row[n + j] -= c;
        }
    };
    let scaled = |mut row: Vec<f64>, rhs: f64| {
        let s = 1.0 + row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        row.iter_mut().for_each(|v| *v /= s);
        (row, rhs / s)
    };
    for i in 0..n {
        let mut row = vec![0.0; nv];
        for j in 0..n {
            if a_adj[(i, j)] != 0.0 {
                put_p(&mut row, j, a_adj[(i, j)]);
            }
        }
        row[mu0 + i] = 1.0;
        let (r, b) = scaled(row, -prob.f_u.values()[i]);
        lp.add_row(r, b);
    }
    for (off, f) in [(lam0, &prob.f_w), (nu0, &prob.f_xi)] {
        for i in 0..n {
            let mut row = vec![0.0; nv];
            put_p(&mut row, i, -1.0);
            row[off + i] = 1.0;
            let (r, b) = scaled(row, -f.values()[i]);
            lp.add_row(r, b);
        }
    }

    for i in 0..n {
        if split_p {
            lp.var_bounds[i] = (0.0, INF);
            lp.var_bounds[n + i] = (0.0, INF);
        }
        let [mu_nonpos, nu_nonpos, mu_zero, nu_zero] = flags[i];
        lp.var_bounds[mu0 + i] = if prob.omega_p0.contains(i) || mu_zero {
            (0.0, 0.0)
        } else if mu_nonpos {
            (-INF, 0.0)
        } else {
            (-INF, INF)
        };
        lp.var_bounds[nu0 + i] = if prob.omega_0p.contains(i) || nu_zero {
            (0.0, 0.0)
        } else if nu_nonpos {
            (-INF, 0.0)
        } else {
            (-INF, INF)
        };
        lp.var_bounds[lam0 + i] = if prob.omega_w.contains(i) { (-INF, 0.0) } else { (0.0, 0.0) };
    }
    Ok(lp)
}

fn unpack(grid: &Arc<Grid>, x: &[f64], split_p: bool) -> Result<KktMultipliers> {
    let n = grid.len();
    let np = if split_p { 2 } else { 1 };
    let p = if split_p {
        (0..n).map(|i| x[i] - x[n + i]).collect()
    } else {
        x[..n].to_vec()
    };
    let part = |k: usize| GridFunction::new(grid.clone(), x[(np + k) * n..(np + k + 1) * n].to_vec());
    Ok(KktMultipliers {
        p: GridFunction::new(grid.clone(), p)?,
        mu: part(0)?,
        nu: part(1)?,
        lam: part(2)?,
    })
}

/// Feasibility of the multiplier system with the chosen sign conditions.
pub fn solve_kkt_system(prob: &MpccLinProblem, signs: SignSystem<'_>) -> Result<KktOutcome> {
    let lp = multiplier_lp(prob, signs, false)?;
    let r = lp_solve(&lp)?;
    match r.status {
        LpStatus::Optimal => Ok(KktOutcome::Found(unpack(prob.grid(), &r.point, false)?)),
        LpStatus::Infeasible => Ok(KktOutcome::Infeasible),
        LpStatus::Unbounded => Err(Error::Internal("feasibility LP reported unbounded".into())),
    }
}

/// The A_β multiplier system.
pub fn solve_kkt_beta(prob: &MpccLinProblem, beta: &CellSet) -> Result<KktOutcome> {
    solve_kkt_system(prob, SignSystem::Beta(beta))
}

/// Minimizes `⟨1, |p|⟩` over the A_β multiplier system; `None` if infeasible.
pub fn min_l1_multiplier(prob: &MpccLinProblem, beta: &CellSet) -> Result<Option<(f64, KktMultipliers)>> {
    let mut lp = multiplier_lp(prob, SignSystem::Beta(beta), true)?;
    let n = prob.n();
    let w = prob.grid().weights();
    for i in 0..n {
        lp.objective[i] = w[i];
        lp.objective[n + i] = w[i];
    }
    let r = lp_solve(&lp)?;
    match r.status {
        LpStatus::Optimal => {
            let m = unpack(prob.grid(), &r.point, true)?;
            Ok(Some((m.p.abs().integral(), m)))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Internal("l1 minimization reported unbounded".into())),
    }
}

/// Like [`solve_kkt_beta`] but with an extra linear objective on the
/// variables `[p | μ | ν | λ]`; used to sample distinct feasible vertices.
pub fn solve_kkt_beta_with_objective(
    prob: &MpccLinProblem,
    beta: &CellSet,
    objective: &[f64],
    box_bound: f64,
) -> Result<KktOutcome> {
    let mut lp = multiplier_lp(prob, SignSystem::Beta(beta), false)?;
    if objective.len() != lp.num_vars {
        return Err(Error::InvalidArgument(format!(
            "objective needs {} coefficients",
            lp.num_vars
        )));
    }
    lp.objective = objective.to_vec();
    for b in lp.var_bounds.iter_mut() {
        b.0 = b.0.max(-box_bound);
        b.1 = b.1.min(box_bound);
    }
    let r = lp_solve(&lp)?;
    match r.status {
        LpStatus::Optimal => Ok(KktOutcome::Found(unpack(prob.grid(), &r.point, false)?)),
        _ => Ok(KktOutcome::Infeasible),
    }
}
