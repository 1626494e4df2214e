//! Explicit modifications of A_β multipliers that make them uniformly bounded
//! by a multiple of `c₀`.
//!
//! Two constructions are available: a shift by `a₀ = max(p, λ, ν)⁻` for
//! nonnegativity-preserving operators when `Ω⁺⁰` is empty, and a shift
//! supported on `Ω_w ∩ β` followed by a mean-correcting shift for averaging
//! operators `A = I + ⟨1,·⟩`. Operators `d₁I + d₂⟨1,·⟩` are reduced to the
//! latter by rescaling the measure by `d₂/d₁` and `μ` by `d₁`.

use crate::error::{Error, Result};
use crate::grid::{CellSet, GridFunction};
use crate::lp::{lp_solve, LpProblem, LpStatus};
use crate::mpcc_lin::{compute_c0, KktMultipliers, MpccLinProblem, SignSystem};
use crate::operators::check_nonneg_preserving;
use crate::stationarity::kkt_residuals;

/// Tolerance for "the input satisfies the A_β system".
const FEASIBILITY_TOL: f64 = 1e-8;
const BOUND_TOL: f64 = 1e-9;

/// Multipliers with a certified pointwise bound
/// `max(|p|,|μ|,|ν|,|λ|) ≤ bound_constant · c0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMultipliers {
    pub mult: KktMultipliers,
    pub bound_constant: f64,
    /// The bound function; equals `c₀` except for rescaled averaging
    /// operators, where it is `max(1, d₁)·c̃₀` of the rescaled problem.
    pub c0: GridFunction,
}

impl NormalizedMultipliers {
    /// Largest excess of the multipliers over the certified bound.
    pub fn bound_violation(&self) -> f64 {
        bound_violation(&self.mult, self.bound_constant, &self.c0)
    }
}

fn bound_violation(m: &KktMultipliers, c: f64, c0: &GridFunction) -> f64 {
    m.pointwise_max_abs()
        .values()
        .iter()
        .zip(c0.values())
        .map(|(v, b)| v - c * b - 1e-12 * c * b.abs())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn require_feasible(prob: &MpccLinProblem, beta: &CellSet, m: &KktMultipliers) -> Result<()> {
    let r = kkt_residuals(prob, m, SignSystem::Beta(beta))?;
    let scale = 1.0 + m.pointwise_max_abs().max_abs();
    if r.max() > FEASIBILITY_TOL * scale {
        return Err(Error::InvalidArgument(format!(
            "input multipliers violate the A_β system by {:e}",
            r.max()
        )));
    }
    Ok(())
}

fn post_check(prob: &MpccLinProblem, beta: &CellSet, out: &NormalizedMultipliers, what: &str) -> Result<()> {
    let r = kkt_residuals(prob, &out.mult, SignSystem::Beta(beta))?;
    let scale = 1.0 + out.mult.pointwise_max_abs().max_abs();
    if r.max() > FEASIBILITY_TOL * scale {
        return Err(Error::Internal(format!("{what}: output violates the A_β system: {:?}", r.0)));
    }
    let viol = out.bound_violation();
    if viol > BOUND_TOL {
        let bound = out.mult.pointwise_max_abs();
        let cells: Vec<String> = (0..bound.len())
            .filter(|&i| bound.values()[i] > out.bound_constant * out.c0.values()[i] + BOUND_TOL)
            .map(|i| format!("cell {i}: {:e} > {:e}", bound.values()[i], out.bound_constant * out.c0.values()[i]))
            .collect();
        return Err(Error::Internal(format!("{what}: bound violated at {}", cells.join(", "))));
    }
    Ok(())
}

fn max3_negative_part(m: &KktMultipliers, i: usize) -> f64 {
    let v = m.p.values()[i].max(m.lam.values()[i]).max(m.nu.values()[i]);
    (-v).max(0.0)
}

/// Shift by `a₀ = max(p₀, λ₀, ν₀)⁻`; needs `A*` nonnegativity preserving and
/// `Ω⁺⁰` empty. Certifies the constant 2.
pub fn normalize_nonneg_case(prob: &MpccLinProblem, beta: &CellSet, m0: &KktMultipliers) -> Result<NormalizedMultipliers> {
    prob.check_beta(beta)?;
    let g = prob.grid().clone();
    if !prob.omega_p0.is_empty() {
        return Err(Error::InvalidArgument("nonnegative case needs an empty Ω⁺⁰".into()));
    }
    if !check_nonneg_preserving(&prob.a_op, &g)? {
        return Err(Error::InvalidArgument("A* does not preserve nonnegativity".into()));
    }
    require_feasible(prob, beta, m0)?;
    let a0 = GridFunction::from_vec(&g, (0..g.len()).map(|i| max3_negative_part(m0, i)).collect());
    let mult = KktMultipliers {
        p: m0.p.add(&a0)?,
        lam: m0.lam.add(&a0)?,
        nu: m0.nu.add(&a0)?,
        mu: m0.mu.sub(&prob.a_op.apply_adjoint(&a0)?)?,
    };
    let out = NormalizedMultipliers {
        mult,
        bound_constant: 2.0,
        c0: compute_c0(prob)?,
    };
    post_check(prob, beta, &out, "nonnegative-case normalization")?;
    Ok(out)
}

/// Requires `A = I + ⟨1,·⟩`.
fn require_unit_average(prob: &MpccLinProblem) -> Result<()> {
    match prob.a_op.averaging_form() {
        Some((d1, d2)) if d1 == 1.0 && d2 == 1.0 => Ok(()),
        _ => Err(Error::InvalidArgument("operator must be v ↦ v + ⟨1, v⟩".into())),
    }
}

/// Checks `⟨1,|p|⟩ ≤ (2 + m(Ω⁺⁰)⁻¹)·c₀(ω)` at every cell.
pub fn verify_l1_bound(prob: &MpccLinProblem, mult: &KktMultipliers) -> Result<bool> {
    require_unit_average(prob)?;
    let mp0 = prob.omega_p0.measure();
    if mp0 <= 0.0 {
        return Err(Error::InvalidArgument("needs m(Ω⁺⁰) > 0".into()));
    }
    let l1 = mult.p.abs().integral();
    let c0 = compute_c0(prob)?;
    let k = 2.0 + 1.0 / mp0;
    Ok(c0.values().iter().all(|&c| l1 <= k * c + BOUND_TOL))
}

/// Checks `|p| ≤ 2c₀` on `Ω \ (Ω_w ∩ β)`.
pub fn verify_pointwise_p_bound(prob: &MpccLinProblem, beta: &CellSet, mult: &KktMultipliers) -> Result<bool> {
    require_unit_average(prob)?;
    prob.check_beta(beta)?;
    let excluded = prob.omega_w.intersection(beta)?;
    let c0 = compute_c0(prob)?;
    Ok((0..prob.n())
        .filter(|&i| !excluded.contains(i))
        .all(|i| mult.p.values()[i].abs() <= 2.0 * c0.values()[i] + BOUND_TOL))
}

/// Measures, bound function and constants of `A = d₁(I + κ⟨1,·⟩)`, κ = d₂/d₁,
/// viewed on the measure space rescaled by κ.
struct Rescaled {
    d1: f64,
    kappa: f64,
    c0_tilde: GridFunction,
}

impl Rescaled {
    fn new(prob: &MpccLinProblem, d1: f64, d2: f64) -> Result<Self> {
        let kappa = d2 / d1;
        let s = prob.f_u.abs().scale(1.0 / d1).add(&prob.f_w.abs())?.add(&prob.f_xi.abs())?;
        let avg = kappa * s.integral();
        let c0_tilde = s.map(|v| 2.0 * v + avg);
        Ok(Rescaled { d1, kappa, c0_tilde })
    }

    fn measure(&self, s: &CellSet) -> f64 {
        self.kappa * s.measure()
    }

    fn bound_fn(&self) -> GridFunction {
        self.c0_tilde.scale(self.d1.max(1.0))
    }
}

fn avg_case_core(prob: &MpccLinProblem, beta: &CellSet, m0: &KktMultipliers, sc: &Rescaled) -> Result<(KktMultipliers, f64)> {
    let g = prob.grid().clone();
    let s = prob.omega_w.intersection(beta)?;
    let ms = s.measure();
    let a0 = GridFunction::from_vec(
        &g,
        (0..g.len()).map(|i| if s.contains(i) { max3_negative_part(m0, i) } else { 0.0 }).collect(),
    );
    let a2 = s.indicator().scale(-a0.integral() / ms);
    let shift = a0.add(&a2)?;
    let mult = KktMultipliers {
        p: m0.p.add(&shift)?,
        lam: m0.lam.add(&shift)?,
        nu: m0.nu.add(&shift)?,
        mu: m0.mu.sub(&prob.a_op.apply_adjoint(&a0)?)?.sub(&prob.a_op.apply_adjoint(&a2)?)?,
    };
    let c_hat = 2.0 + (2.0 + 1.0 / sc.measure(&prob.omega_p0)) / sc.measure(&s);
    Ok((mult, c_hat))
}

/// Two-step shift on `Ω_w ∩ β` for `A = I + ⟨1,·⟩`; needs `m(Ω⁺⁰) > 0` and
/// `m(Ω_w ∩ β) > 0`. Certifies the constant of the general averaging case.
pub fn normalize_avg_case(prob: &MpccLinProblem, beta: &CellSet, m0: &KktMultipliers) -> Result<NormalizedMultipliers> {
    require_unit_average(prob)?;
    avg_case(prob, beta, m0, 1.0, 1.0)
}

fn avg_case(prob: &MpccLinProblem, beta: &CellSet, m0: &KktMultipliers, d1: f64, d2: f64) -> Result<NormalizedMultipliers> {
    prob.check_beta(beta)?;
    if prob.omega_p0.is_empty() || prob.omega_w.intersection(beta)?.is_empty() {
        return Err(Error::InvalidArgument("averaging case needs m(Ω⁺⁰) > 0 and m(Ω_w ∩ β) > 0".into()));
    }
    require_feasible(prob, beta, m0)?;
    let sc = Rescaled::new(prob, d1, d2)?;
    let (mult, c_hat) = avg_case_core(prob, beta, m0, &sc)?;
    let total = sc.kappa * prob.grid().total_measure();
    let p_viol = bound_violation(
        &KktMultipliers {
            p: mult.p.clone(),
            ..KktMultipliers::zeros(prob.grid())
        },
        c_hat,
        &sc.c0_tilde,
    );
    if p_viol > BOUND_TOL {
        return Err(Error::Internal(format!("averaging-case normalization: |p| exceeds its bound by {p_viol:e}")));
    }
    let out = NormalizedMultipliers {
        mult,
        bound_constant: 1.0 + c_hat * (2.0 + total),
        c0: sc.bound_fn(),
    };
    post_check(prob, beta, &out, "averaging-case normalization")?;
    Ok(out)
}

/// Case split on `m(Ω⁺⁰)` and `m(Ω_w ∩ β)`.
pub fn normalize_dispatch(prob: &MpccLinProblem, beta: &CellSet, m0: &KktMultipliers) -> Result<NormalizedMultipliers> {
    prob.check_beta(beta)?;
    let g = prob.grid().clone();
    if prob.omega_p0.is_empty() && check_nonneg_preserving(&prob.a_op, &g)? {
        return normalize_nonneg_case(prob, beta, m0);
    }
    let (d1, d2) = match prob.a_op.averaging_form() {
        Some((d1, d2)) if d1 > 0.0 && d2 > 0.0 => (d1, d2),
        _ => {
            return Err(Error::UnsupportedOperator(
                "bounded multipliers need a nonnegativity-preserving operator with empty Ω⁺⁰ or an operator d₁v + d₂⟨1,v⟩".into(),
            ))
        }
    };
    let sc = Rescaled::new(prob, d1, d2)?;
    if prob.omega_w.intersection(beta)?.is_empty() {
        require_feasible(prob, beta, m0)?;
        let out = NormalizedMultipliers {
            mult: m0.clone(),
            bound_constant: 5.0 + 2.0 * sc.kappa * g.total_measure(),
            c0: sc.bound_fn(),
        };
        post_check(prob, beta, &out, "unchanged multipliers")?;
        return Ok(out);
    }
    avg_case(prob, beta, m0, d1, d2)
}

/// Result of the convex-combination preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyCombination {
    pub mult: KktMultipliers,
    pub weights: Vec<f64>,
    /// Minimal `d` with `|ν| ≤ d·c₀`.
    pub d: f64,
}

/// Finds convex weights whose combination has `μ ≤ 0` on `biactive \ α` and
/// `ν ≤ 0` on `α` while minimizing `d` in `|ν| ≤ d·c₀`.
pub fn preprocess_family_lp(
    family: &[KktMultipliers],
    alpha: &CellSet,
    biactive: &CellSet,
    c0: &GridFunction,
) -> Result<FamilyCombination> {
    let k = family.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    if !alpha.is_subset(biactive) {
        return Err(Error::InvalidArgument("α must lie in the biactive set".into()));
    }
    let n = c0.len();
    // variables: ω (k), d, then one slack per inequality
    let sign_cells: Vec<(usize, bool)> = biactive.indices().into_iter().map(|i| (i, alpha.contains(i))).collect();
    let nslack = sign_cells.len() + 2 * n;
    let nv = k + 1 + nslack;
    let mut lp = LpProblem::new(nv);
    for j in 0..k {
        lp.var_bounds[j] = (0.0, f64::INFINITY);
    }
    lp.var_bounds[k] = (0.0, f64::INFINITY);
    for j in k + 1..nv {
        lp.var_bounds[j] = (0.0, f64::INFINITY);
    }
    lp.objective[k] = 1.0;
    let mut row = vec![0.0; nv];
    row[..k].iter_mut().for_each(|v| *v = 1.0);
    lp.add_row(row, 1.0);
    let mut slack = k + 1;
    for &(i, in_alpha) in &sign_cells {
        let mut row = vec![0.0; nv];
        for (j, m) in family.iter().enumerate() {
            row[j] = if in_alpha { m.nu.values()[i] } else { m.mu.values()[i] };
        }
        row[slack] = 1.0;
        slack += 1;
        lp.add_row(row, 0.0);
    }
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; nv];
            for (j, m) in family.iter().enumerate() {
                row[j] = sign * m.nu.values()[i];
            }
            row[k] = -c0.values()[i];
            row[slack] = 1.0;
            slack += 1;
            lp.add_row(row, 0.0);
        }
    }
    let r = lp_solve(&lp)?;
    match r.status {
        LpStatus::Optimal => {
            let weights: Vec<f64> = r.point[..k].iter().map(|w| w.max(0.0)).collect();
            let refs: Vec<&KktMultipliers> = family.iter().collect();
            Ok(FamilyCombination {
                mult: KktMultipliers::combine(&weights, &refs)?,
                weights,
                d: r.point[k],
            })
        }
        LpStatus::Infeasible | LpStatus::Unbounded => Err(Error::NoMemberInAalpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::mpcc_lin::solve_kkt_beta;
    use crate::operators::LinOp;
    use std::sync::Arc;

    fn gf(g: &Arc<Grid>, v: &[f64]) -> GridFunction {
        GridFunction::new(g.clone(), v.to_vec()).unwrap()
    }

    /// One cell, Ω_w = Ω⁰⁰ = β = Ω, multipliers chosen by hand and costs
    /// derived from them.
    fn one_cell_with(p: f64, lam: f64, nu: f64) -> (MpccLinProblem, CellSet, KktMultipliers) {
        let g = Grid::uniform(0.0, 1.0, 1).unwrap();
        let mu = 0.0;
        let m = KktMultipliers {
            p: gf(&g, &[p]),
            mu: gf(&g, &[mu]),
            nu: gf(&g, &[nu]),
            lam: gf(&g, &[lam]),
        };
        let prob = MpccLinProblem::new(
            LinOp::identity(),
            gf(&g, &[-p - mu]),
            gf(&g, &[p - lam]),
            gf(&g, &[p - nu]),
            CellSet::empty(&g),
            CellSet::full(&g),
            CellSet::empty(&g),
            CellSet::full(&g),
        )
        .unwrap();
        (prob, CellSet::full(&g), m)
    }

    #[test]
    fn nonneg_case_by_hand() {
        let (prob, beta, m) = one_cell_with(-1.0, -2.0, 0.0);
        let out = normalize_nonneg_case(&prob, &beta, &m).unwrap();
        assert_eq!(out.mult, m);
        assert_eq!(out.bound_constant, 2.0);

        let (prob, beta, m) = one_cell_with(-3.0, -1.0, -2.0);
        let out = normalize_nonneg_case(&prob, &beta, &m).unwrap();
        assert_eq!(out.mult.p.values(), &[-2.0]);
        assert_eq!(out.mult.lam.values(), &[0.0]);
        assert_eq!(out.mult.nu.values(), &[-1.0]);
        // idempotent
        let again = normalize_nonneg_case(&prob, &beta, &out.mult).unwrap();
        assert_eq!(again.mult, out.mult);
    }

    #[test]
    fn nonneg_case_rejects_bad_preconditions() {
        let (prob, beta, m) = one_cell_with(-1.0, -2.0, 0.0);
        let mut bad = m.clone();
        bad.p = bad.p.scale(5.0);
        assert!(matches!(normalize_nonneg_case(&prob, &beta, &bad), Err(Error::InvalidArgument(_))));
        let mut neg = prob.clone();
        neg.a_op = LinOp::ScaledIdentity(-1.0);
        assert!(normalize_nonneg_case(&neg, &beta, &m).is_err());
    }

    fn averaging_problem(g: &Arc<Grid>, f: [&[f64]; 3], sets: [&[usize]; 4]) -> MpccLinProblem {
        MpccLinProblem::new(
            LinOp::ScaledIdPlusAverage { d1: 1.0, d2: 1.0 },
            gf(g, f[0]),
            gf(g, f[1]),
            gf(g, f[2]),
            CellSet::from_indices(g, sets[0]).unwrap(),
            CellSet::from_indices(g, sets[1]).unwrap(),
            CellSet::from_indices(g, sets[2]).unwrap(),
            CellSet::from_indices(g, sets[3]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn avg_case_two_cells_by_hand() {
        // cell 0 in Ω⁺⁰, cell 1 biactive with β = Ω_w = {1}
        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        let (p, lam, nu) = ([0.5, -1.0], [0.0, -1.5], [0.0, -2.0]);
        // μ = 0 on Ω⁺⁰; μ free on β
        let a = LinOp::ScaledIdPlusAverage { d1: 1.0, d2: 1.0 };
        let ap = a.apply(&gf(&g, &p)).unwrap();
        let mu = [0.0, 0.25];
        let f_u: Vec<f64> = (0..2).map(|i| -ap.values()[i] - mu[i]).collect();
        let f_w: Vec<f64> = (0..2).map(|i| p[i] - lam[i]).collect();
        let f_xi: Vec<f64> = (0..2).map(|i| p[i] - nu[i]).collect();
        let prob = averaging_problem(&g, [&f_u, &f_w, &f_xi], [&[], &[1], &[0], &[1]]);
        let beta = CellSet::from_indices(&g, &[1]).unwrap();
        let m0 = KktMultipliers { p: gf(&g, &p), mu: gf(&g, &mu), nu: gf(&g, &nu), lam: gf(&g, &lam) };
        let out = normalize_avg_case(&prob, &beta, &m0).unwrap();
        // a₀ = χ₁·1, a₂ = -χ₁·⟨1,a₀⟩/w₁ = -χ₁
        let a0_int = 0.5 * 1.0;
        let a2 = -a0_int / 0.5;
        assert_eq!(a0_int + 0.5 * a2, 0.0);
        assert!((out.mult.p.values()[1] - (p[1] + 1.0 + a2)).abs() < 1e-15);
        assert_eq!(out.mult.p.values()[0], p[0]);
        let c = 1.0 + (2.0 + (2.0 + 1.0 / 0.5) / 0.5) * (2.0 + 1.0);
        assert_eq!(out.bound_constant, c);
    }

    #[test]
    fn avg_case_without_shift_is_identity() {
        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        let p = [0.5, 0.25];
        let a = LinOp::ScaledIdPlusAverage { d1: 1.0, d2: 1.0 };
        let ap = a.apply(&gf(&g, &p)).unwrap();
        let f_u: Vec<f64> = ap.values().iter().map(|v| -v).collect();
        let prob = averaging_problem(&g, [&f_u, &p, &p], [&[], &[1], &[0], &[1]]);
        let beta = CellSet::from_indices(&g, &[1]).unwrap();
        let m0 = KktMultipliers {
            p: gf(&g, &p),
            mu: GridFunction::zeros(&g),
            nu: GridFunction::zeros(&g),
            lam: GridFunction::zeros(&g),
        };
        let out = normalize_avg_case(&prob, &beta, &m0).unwrap();
        assert_eq!(out.mult, m0);
    }

    #[test]
    fn dispatch_constants() {
        let g = Grid::uniform(0.0, 1.0, 4).unwrap();
        let z = [0.0; 4];
        // m(Ω⁺⁰) = 0
        let prob = averaging_problem(&g, [&z, &z, &z], [&[], &[0, 1, 2, 3], &[], &[0]]);
        let beta = CellSet::from_indices(&g, &[0]).unwrap();
        let zero = KktMultipliers::zeros(&g);
        assert_eq!(normalize_dispatch(&prob, &beta, &zero).unwrap().bound_constant, 2.0);
        // m(Ω_w ∩ β) = 0 with m(Ω) = 1
        let prob = averaging_problem(&g, [&z, &z, &z], [&[], &[0, 1], &[2, 3], &[2]]);
        assert_eq!(normalize_dispatch(&prob, &beta, &zero).unwrap().bound_constant, 7.0);
        // m(Ω_w ∩ β) = 0.5, m(Ω⁺⁰) = 0.25
        let prob = averaging_problem(&g, [&z, &z, &z], [&[], &[0, 1, 2], &[3], &[0, 1]]);
        let beta = CellSet::from_indices(&g, &[0, 1]).unwrap();
        assert_eq!(normalize_dispatch(&prob, &beta, &zero).unwrap().bound_constant, 43.0);
    }

    #[test]
    fn dispatch_rejects_unsupported_operator() {
        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        let z = GridFunction::zeros(&g);
        let prob = MpccLinProblem::new(
            LinOp::Matrix(nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0])),
            z.clone(),
            z.clone(),
            z,
            CellSet::empty(&g),
            CellSet::from_indices(&g, &[0]).unwrap(),
            CellSet::from_indices(&g, &[1]).unwrap(),
            CellSet::empty(&g),
        )
        .unwrap();
        let r = normalize_dispatch(&prob, &CellSet::empty(&g), &KktMultipliers::zeros(&g));
        assert!(matches!(r, Err(Error::UnsupportedOperator(_))));
    }

    #[test]
    fn rescaled_averaging_operator_is_bounded() {
        // A = 0.25 I + 0.0625⟨1,·⟩ with nonempty Ω⁺⁰ and Ω_w ∩ β
        let g = Grid::uniform(0.0, 1.0, 4).unwrap();
        let prob = MpccLinProblem::new(
            LinOp::ScaledIdPlusAverage { d1: 0.25, d2: 0.0625 },
            gf(&g, &[-1.0, 0.3, -0.2, 0.5]),
            gf(&g, &[4.0, 0.1, 0.2, -0.3]),
            gf(&g, &[0.0, 0.0, 0.1, 0.0]),
            CellSet::from_indices(&g, &[3]).unwrap(),
            CellSet::from_indices(&g, &[0, 1]).unwrap(),
            CellSet::from_indices(&g, &[2]).unwrap(),
            CellSet::from_indices(&g, &[0, 1, 2]).unwrap(),
        )
        .unwrap();
        let beta = CellSet::from_indices(&g, &[0]).unwrap();
        if let Some(m0) = solve_kkt_beta(&prob, &beta).unwrap().found() {
            let out = normalize_dispatch(&prob, &beta, &m0).unwrap();
            assert!(out.bound_violation() <= 1e-9);
        }
    }

    #[test]
    fn l1_and_pointwise_verifiers() {
        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        let z = [0.0; 2];
        let prob = averaging_problem(&g, [&z, &z, &z], [&[], &[1], &[0], &[1]]);
        let zero = KktMultipliers::zeros(&g);
        assert!(verify_l1_bound(&prob, &zero).unwrap());
        let mut huge = zero.clone();
        huge.p = GridFunction::constant(&g, 1e6);
        assert!(!verify_l1_bound(&prob, &huge).unwrap());
        assert!(verify_pointwise_p_bound(&prob, &CellSet::empty(&g), &zero).unwrap());
        assert!(!verify_pointwise_p_bound(&prob, &CellSet::empty(&g), &huge).unwrap());
        let no_p0 = averaging_problem(&g, [&z, &z, &z], [&[], &[0, 1], &[], &[1]]);
        assert!(verify_l1_bound(&no_p0, &zero).is_err());
    }

    #[test]
    fn preprocessing_simple_families() {
        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        let bi = CellSet::full(&g);
        let alpha = CellSet::from_indices(&g, &[0]).unwrap();
        let c0 = GridFunction::constant(&g, 1.0);
        let zero = KktMultipliers::zeros(&g);
        let r = preprocess_family_lp(&[zero.clone()], &alpha, &bi, &c0).unwrap();
        assert_eq!(r.d, 0.0);
        assert_eq!(r.mult, zero);

        // first member admissible, second violates μ ≤ 0 off α
        let mut good = zero.clone();
        good.nu = gf(&g, &[-0.5, 0.25]);
        good.mu = gf(&g, &[3.0, -1.0]);
        let mut bad = zero.clone();
        bad.mu = gf(&g, &[0.0, 5.0]);
        bad.nu = gf(&g, &[1.0, 0.0]);
        let r = preprocess_family_lp(&[good.clone(), bad.clone()], &alpha, &bi, &c0).unwrap();
        // μ₁ ≤ 0 forces ω₀ ≥ 5/6; there |ν₀| = 1/4 is minimal
        assert!((r.d - 0.25).abs() < 1e-12);
        assert!((r.weights[0] - 5.0 / 6.0).abs() < 1e-12);

        assert!(matches!(
            preprocess_family_lp(&[bad], &alpha, &bi, &c0),
            Err(Error::NoMemberInAalpha)
        ));
    }

    #[test]
    fn preprocessing_matches_simplex_grid_search() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = Grid::uniform(0.0, 1.0, 3).unwrap();
        let bi = CellSet::full(&g);
        let alpha = CellSet::from_indices(&g, &[1]).unwrap();
        for _ in 0..5 {
            let c0 = GridFunction::new(g.clone(), (0..3).map(|_| rng.gen_range(1.0..2.0)).collect()).unwrap();
            let family: Vec<KktMultipliers> = (0..3)
                .map(|_| {
                    let mut m = KktMultipliers::zeros(&g);
                    // signs on the biactive set always admissible
                    m.mu = GridFunction::new(g.clone(), (0..3).map(|_| rng.gen_range(-1.0..0.0)).collect()).unwrap();
                    m.nu = GridFunction::new(
                        g.clone(),
                        (0..3).map(|i| if i == 1 { rng.gen_range(-1.0..0.0) } else { rng.gen_range(-1.0..1.0) }).collect(),
                    )
                    .unwrap();
                    m
                })
                .collect();
            let r = preprocess_family_lp(&family, &alpha, &bi, &c0).unwrap();
            let steps = 1000;
            let mut best = f64::INFINITY;
            for a in 0..=steps {
                for b in 0..=steps - a {
                    let w = [a as f64 / steps as f64, b as f64 / steps as f64, (steps - a - b) as f64 / steps as f64];
                    let d = (0..3)
                        .map(|i| (0..3).map(|k| w[k] * family[k].nu.values()[i]).sum::<f64>().abs() / c0.values()[i])
                        .fold(0.0, f64::max);
                    best = best.min(d);
                }
            }
            assert!(r.d <= best + 1e-9, "lp {} grid {best}", r.d);
            assert!(best - r.d <= 2e-3, "lp {} grid {best}", r.d);
        }
    }
}
