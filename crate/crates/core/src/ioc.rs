//! Inverse optimal control: problem data, KKT-reformulation points, the
//! linearization at a point, end-to-end M-stationarity certification and the
//! two built-in scenarios.
//!
//! The linearized problem substitutes `w̃ = αw` so that the state equation
//! reads `(αI + S*S)u - w̃ - ξ = 0`. Its multiplier `λ̃` relates to the
//! multiplier of the reformulation by `λ = αλ̃`; `p`, `μ`, `ν` are shared.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{same_grid, CellSet, Grid, GridFunction};
use crate::lower_level::solve_oc;
use crate::lp::LpStatus;
use crate::mpcc_lin::{min_l1_multiplier, solve_kkt_system, solve_lp_beta, CellSign, KktMultipliers, KktOutcome, MpccLinProblem, SignSystem};
use crate::operators::{alpha_plus, DiscreteLaplacian1D, LinOp};
use crate::stationarity::{
    classify_active_sets, kkt_residuals, m_condition_residual, CertificateKind, Residuals, StationarityCertificate,
};
use crate::synthesis::{aforall_certificate, enumerate_family, solve_m_pattern, synthesize};

/// The observation operator `S`.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// `Sv = scale·⟨1, v⟩ ∈ ℝ`.
    Averaging { scale: f64 },
    /// `S` acting `L² → L²`.
    Operator(LinOp),
}

/// Desired observation `y_d`, shaped like the range of `S`.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Scalar(f64),
    Function(GridFunction),
}

/// Upper-level cost `f(u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cost {
    /// `f(u) = ⟨c, u⟩`
    LinearIntegral(GridFunction),
    /// `f(u) = ½‖u - u_d‖²`
    QuadraticTracking(GridFunction),
}

#[derive(Debug, Clone)]
pub struct IocProblem {
    pub grid: Arc<Grid>,
    pub s_op: Observation,
    pub alpha: f64,
    pub y_d: Target,
    pub u_a: GridFunction,
    pub w_a: GridFunction,
    pub zeta: GridFunction,
    pub f_spec: Cost,
}

impl IocProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Arc<Grid>,
        s_op: Observation,
        alpha: f64,
        y_d: Target,
        u_a: GridFunction,
        w_a: GridFunction,
        zeta: GridFunction,
        f_spec: Cost,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("α must be positive, got {alpha}")));
        }
        let cost_fn = match &f_spec {
            Cost::LinearIntegral(c) | Cost::QuadraticTracking(c) => c,
        };
        for (name, f) in [("u_a", &u_a), ("w_a", &w_a), ("zeta", &zeta), ("cost", cost_fn)] {
            if !same_grid(&grid, f.grid()) {
                return Err(Error::InvalidArgument(format!("{name} lives on another grid")));
            }
        }
        match (&s_op, &y_d) {
            (Observation::Averaging { scale }, Target::Scalar(_)) => {
                if !scale.is_finite() {
                    return Err(Error::InvalidArgument("averaging scale must be finite".into()));
                }
            }
            (Observation::Operator(_), Target::Function(y)) => {
                if !same_grid(&grid, y.grid()) {
                    return Err(Error::InvalidArgument("y_d lives on another grid".into()));
                }
            }
            _ => return Err(Error::InvalidArgument("y_d does not match the range of S".into())),
        }
        Ok(IocProblem {
            grid,
            s_op,
            alpha,
            y_d,
            u_a,
            w_a,
            zeta,
            f_spec,
        })
    }

    /// `S*S`.
    pub fn gram(&self) -> LinOp {
        match &self.s_op {
            Observation::Averaging { scale } => LinOp::ScaledIdPlusAverage { d1: 0.0, d2: scale * scale },
            Observation::Operator(op) => LinOp::GramComposition(Box::new(op.clone())),
        }
    }

    /// `αI + S*S`.
    pub fn hessian(&self) -> LinOp {
        alpha_plus(self.alpha, self.gram())
    }

    /// `S*y_d`.
    pub fn s_adj_yd(&self) -> Result<GridFunction> {
        match (&self.s_op, &self.y_d) {
            (Observation::Averaging { scale }, Target::Scalar(y)) => Ok(GridFunction::constant(&self.grid, scale * y)),
            (Observation::Operator(op), Target::Function(y)) => op.apply_adjoint(y),
            _ => Err(Error::Internal("y_d does not match the range of S".into())),
        }
    }

    /// `S = 0`, detected structurally.
    pub fn observation_is_zero(&self) -> bool {
        match &self.s_op {
            Observation::Averaging { scale } => *scale == 0.0,
            Observation::Operator(LinOp::ScaledIdentity(a)) => *a == 0.0,
            Observation::Operator(LinOp::ScaledIdPlusAverage { d1, d2 }) => *d1 == 0.0 && *d2 == 0.0,
            Observation::Operator(LinOp::Matrix(m)) => m.iter().all(|&x| x == 0.0),
            _ => false,
        }
    }

    /// `S*(Su - y_d) + α(u - w)`.
    pub fn xi_of(&self, u: &GridFunction, w: &GridFunction) -> Result<GridFunction> {
        self.gram().apply(u)?.sub(&self.s_adj_yd()?)?.add(&u.sub(w)?.scale(self.alpha))
    }

    pub fn f_value(&self, u: &GridFunction) -> Result<f64> {
        match &self.f_spec {
            Cost::LinearIntegral(c) => c.inner(u),
            Cost::QuadraticTracking(ud) => Ok(0.5 * u.sub(ud)?.norm().powi(2)),
        }
    }

    pub fn f_prime(&self, u: &GridFunction) -> Result<GridFunction> {
        match &self.f_spec {
            Cost::LinearIntegral(c) => Ok(c.clone()),
            Cost::QuadraticTracking(ud) => u.sub(ud),
        }
    }

    /// `-Δ_h w` on uniform grids.
    pub fn neg_laplacian(&self, w: &GridFunction) -> Result<GridFunction> {
        DiscreteLaplacian1D::new(&self.grid)?.apply(w)
    }
}

/// A point `(ū, w̄, ξ̄)` of the KKT reformulation.
#[derive(Debug, Clone, PartialEq)]
pub struct KktrPoint {
    pub u: GridFunction,
    pub w: GridFunction,
    pub xi: GridFunction,
}

const POINT_TOL: f64 = 1e-9;

/// Largest violation of the reformulation's constraints at `pt`.
pub fn kktr_feasibility(ioc: &IocProblem, pt: &KktrPoint) -> Result<f64> {
    let state = ioc.xi_of(&pt.u, &pt.w)?.sub(&pt.xi)?.max_abs();
    let gap = pt.u.sub(&ioc.u_a)?;
    let upper = pt.w.sub(&ioc.w_a)?;
    let mut v = state;
    for i in 0..gap.len() {
        let (s, x) = (gap.values()[i], pt.xi.values()[i]);
        v = v.max(-s).max(-x).max(s.min(x)).max(-upper.values()[i]);
    }
    Ok(v)
}

/// Solves the lower level at `w̄` and packages the reformulation point.
pub fn build_kktr_point(ioc: &IocProblem, w_bar: &GridFunction) -> Result<KktrPoint> {
    let short = w_bar
        .sub(&ioc.w_a)?
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(-v));
    if short > 1e-12 {
        return Err(Error::InvalidArgument(format!("w̄ violates w ≥ w_a by {short:e}")));
    }
    let sol = solve_oc(ioc, w_bar)?;
    let pt = KktrPoint {
        u: sol.u,
        w: w_bar.clone(),
        xi: sol.xi,
    };
    let v = kktr_feasibility(ioc, &pt)?;
    let scale = 1.0 + pt.u.max_abs() + pt.xi.max_abs() + w_bar.max_abs();
    if v > POINT_TOL * scale {
        return Err(Error::Internal(format!("lower-level solution violates the reformulation by {v:e}")));
    }
    Ok(pt)
}

/// Linear MPCC at `pt` in the rescaled variable `w̃ = αw`.
pub fn linearize(
    ioc: &IocProblem,
    pt: &KktrPoint,
    f_prime: &GridFunction,
    neg_lap_w: &GridFunction,
    tol: f64,
) -> Result<MpccLinProblem> {
    let sets = classify_active_sets(&pt.u, &pt.xi, &ioc.u_a, tol)?;
    let g = ioc.grid.clone();
    let omega_w = CellSet::new(
        g.clone(),
        pt.w.sub(&ioc.w_a)?.values().iter().map(|d| d.abs() <= tol).collect(),
    )?;
    MpccLinProblem::new(
        ioc.hessian(),
        f_prime.clone(),
        neg_lap_w.add(&ioc.zeta)?.scale(1.0 / ioc.alpha),
        GridFunction::zeros(&g),
        sets.strongly_active,
        sets.biactive,
        sets.inactive,
        omega_w,
    )
}

/// Multipliers of the linearized problem expressed for the reformulation.
pub fn lin_to_kktr(ioc: &IocProblem, m: &KktMultipliers) -> KktMultipliers {
    KktMultipliers {
        lam: m.lam.scale(ioc.alpha),
        ..m.clone()
    }
}

pub fn kktr_to_lin(ioc: &IocProblem, m: &KktMultipliers) -> KktMultipliers {
    KktMultipliers {
        lam: m.lam.scale(1.0 / ioc.alpha),
        ..m.clone()
    }
}

/// Residuals of the M-stationarity system of the reformulation at `pt`,
/// evaluated from the problem data:
///
/// ```text
/// f'(ū) + (αI + S*S)p + μ = 0,   -Δw̄ + ζ - αp + λ = 0,   -p + ν = 0,
/// λ ≤ 0 on {w̄ = w_a}, λ = 0 elsewhere, μ = 0 on {ū > u_a}, ν = 0 on {ξ̄ > 0},
/// M-condition on the biactive set.
/// ```
pub fn kktr_m_residuals(
    ioc: &IocProblem,
    pt: &KktrPoint,
    m: &KktMultipliers,
    neg_lap_w: &GridFunction,
    tol: f64,
) -> Result<Residuals> {
    let sets = classify_active_sets(&pt.u, &pt.xi, &ioc.u_a, tol)?;
    let a = ioc.hessian();
    let eq_u = ioc.f_prime(&pt.u)?.add(&a.apply_adjoint(&m.p)?)?.add(&m.mu)?;
    let eq_w = neg_lap_w.add(&ioc.zeta)?.sub(&m.p.scale(ioc.alpha))?.add(&m.lam)?;
    let eq_xi = m.nu.sub(&m.p)?;
    let mut r = Residuals::default();
    r.insert("stationarity_u", eq_u.max_abs());
    r.insert("stationarity_w", eq_w.max_abs());
    r.insert("stationarity_xi", eq_xi.max_abs());
    let at_bound: Vec<bool> = pt.w.sub(&ioc.w_a)?.values().iter().map(|d| d.abs() <= tol).collect();
    let (mu, nu, lam) = (m.mu.values(), m.nu.values(), m.lam.values());
    let mut lam_sign: f64 = 0.0;
    let mut lam_zero: f64 = 0.0;
    let mut mu_zero: f64 = 0.0;
    let mut nu_zero: f64 = 0.0;
    for i in 0..pt.u.len() {
        if at_bound[i] {
            lam_sign = lam_sign.max(lam[i]);
        } else {
            lam_zero = lam_zero.max(lam[i].abs());
        }
        if sets.inactive.contains(i) {
            mu_zero = mu_zero.max(mu[i].abs());
        }
        if sets.strongly_active.contains(i) {
            nu_zero = nu_zero.max(nu[i].abs());
        }
    }
    r.insert("lambda_sign_on_omega_w", lam_sign);
    r.insert("lambda_zero_off_omega_w", lam_zero);
    r.insert("mu_zero_on_omega_p0", mu_zero);
    r.insert("nu_zero_on_omega_0p", nu_zero);
    r.insert("m_condition", m_condition_residual(&m.mu, &m.nu, &sets.biactive, tol));
    Ok(r)
}

/// Whether a structural condition guaranteeing M-multipliers holds at `pt`:
/// averaging observation, or `u` on the obstacle everywhere with `S*S`
/// preserving nonnegativity.
pub fn hypotheses_detected(ioc: &IocProblem, pt: &KktrPoint, tol: f64) -> Result<bool> {
    if matches!(ioc.s_op, Observation::Averaging { scale } if scale > 0.0) {
        return Ok(true);
    }
    let on_bound = pt.u.sub(&ioc.u_a)?.values().iter().all(|d| d.abs() <= tol);
    Ok(on_bound && crate::operators::check_nonneg_preserving(&ioc.gram(), &ioc.grid)?)
}

/// Certifies stationarity of `w̄` for the reformulation. `Weak` and `S` are
/// decided by one multiplier LP, `M` through the A_β family and pattern
/// synthesis, `Aforall` by the family alone.
pub fn certify_ioc_kind(
    ioc: &IocProblem,
    w_bar: &GridFunction,
    kind: CertificateKind,
    cap: usize,
    tol: f64,
) -> Result<StationarityCertificate> {
    let pt = build_kktr_point(ioc, w_bar)?;
    let neg_lap = ioc.neg_laplacian(&pt.w)?;
    let lin = linearize(ioc, &pt, &ioc.f_prime(&pt.u)?, &neg_lap, tol)?;
    let assumptions = hypotheses_detected(ioc, &pt, tol)?;
    let lin_mult = match kind {
        CertificateKind::Weak | CertificateKind::S => {
            let signs = if kind == CertificateKind::S { SignSystem::Strong } else { SignSystem::Weak };
            match solve_kkt_system(&lin, signs)? {
                KktOutcome::Found(m) => m,
                KktOutcome::Infeasible => return Ok(StationarityCertificate::refuted(kind, tol, "multiplier_system_infeasible")),
            }
        }
        CertificateKind::M => {
            let family = match enumerate_family(&lin, cap) {
                Ok(f) => f,
                Err(Error::NotAForallStationary { beta }) => {
                    let mut c = StationarityCertificate::refuted(kind, tol, "not_a_forall_stationary");
                    c.beta = Some(beta);
                    return Ok(c);
                }
                Err(e) => return Err(e),
            };
            synthesize(&family, tol)?.mult
        }
        CertificateKind::Aforall => {
            return match enumerate_family(&lin, cap) {
                Ok(f) => aforall_certificate(&f, tol),
                Err(Error::NotAForallStationary { beta }) => {
                    let mut c = StationarityCertificate::refuted(kind, tol, "not_a_forall_stationary");
                    c.beta = Some(beta);
                    Ok(c)
                }
                Err(e) => Err(e),
            };
        }
        CertificateKind::Abeta => {
            return Err(Error::InvalidArgument("A_β certification needs a set β; use the linear problem".into()))
        }
    };
    let mult = lin_to_kktr(ioc, &lin_mult);
    let mut r = kktr_m_residuals(ioc, &pt, &mult, &neg_lap, tol)?;
    match kind {
        CertificateKind::Weak => {
            r.0.remove("m_condition");
        }
        CertificateKind::S => {
            let bi = &lin.omega_00;
            let worst = bi
                .indices()
                .iter()
                .map(|&i| mult.mu.values()[i].max(mult.nu.values()[i]).max(0.0))
                .fold(0.0, f64::max);
            r.0.remove("m_condition");
            r.insert("sign_biactive", worst);
        }
        _ => {}
    }
    let mut c = StationarityCertificate::new(kind, r, tol, Some(mult)).with_flag("multipliers_in_reformulation_frame");
    if !assumptions {
        c = c.with_flag("assumptions_unverified");
    }
    Ok(c)
}

/// M-stationarity certificate of `w̄`.
pub fn certify_ioc(ioc: &IocProblem, w_bar: &GridFunction, cap: usize, tol: f64) -> Result<StationarityCertificate> {
    certify_ioc_kind(ioc, w_bar, CertificateKind::M, cap, tol)
}

/// M-certificate of `w̄` from one uniform branch on the whole biactive set,
/// solved directly without enumerating the A_β family.
pub fn certify_ioc_pattern(ioc: &IocProblem, w_bar: &GridFunction, sign: CellSign, tol: f64) -> Result<StationarityCertificate> {
    let pt = build_kktr_point(ioc, w_bar)?;
    let neg_lap = ioc.neg_laplacian(&pt.w)?;
    let lin = linearize(ioc, &pt, &ioc.f_prime(&pt.u)?, &neg_lap, tol)?;
    let pattern = vec![sign; lin.omega_00.count()];
    let lin_mult = match solve_m_pattern(&lin, &pattern)? {
        KktOutcome::Found(m) => m,
        KktOutcome::Infeasible => {
            return Ok(StationarityCertificate::refuted(CertificateKind::M, tol, "pattern_infeasible"))
        }
    };
    let mult = lin_to_kktr(ioc, &lin_mult);
    let r = kktr_m_residuals(ioc, &pt, &mult, &neg_lap, tol)?;
    Ok(StationarityCertificate::new(CertificateKind::M, r, tol, Some(mult))
        .with_flag("multipliers_in_reformulation_frame")
        .with_flag("fixed_pattern"))
}

/// Observation operator of the example without strong stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NostrongVariant {
    /// Seeded entrywise nonnegative `B` with `‖BᵀB‖₂ = α`.
    NonnegMatrix,
    /// `Sv = α⟨1, v⟩`.
    Averaging,
}

/// A seeded random instance on `(0, 1)`: averaging or inverse-Laplacian
/// observation, quadratic tracking cost, `ζ = 0` and an inactive `w_a`.
pub fn scenario_random(n: usize, seed: u64) -> Result<IocProblem> {
    random_ioc(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

pub(crate) fn random_ioc(rng: &mut ChaCha8Rng, n: usize) -> Result<IocProblem> {
    let g = Grid::uniform(0.0, 1.0, n)?;
    let gf = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        GridFunction::new(g.clone(), (0..n).map(|_| rng.gen_range(lo..hi)).collect())
    };
    let (s, y_d) = if rng.gen_bool(0.5) {
        let scale = rng.gen_range(0.1..2.0);
        (Observation::Averaging { scale }, Target::Scalar(rng.gen_range(-1.0..1.0)))
    } else {
        (Observation::Operator(LinOp::inverse_laplacian(&g)?), Target::Function(gf(rng, -1.0, 1.0)?))
    };
    let alpha = rng.gen_range(0.05..1.0);
    let u_a = gf(rng, -0.5, 0.5)?;
    let u_d = gf(rng, -1.0, 1.0)?;
    IocProblem::new(
        g.clone(),
        s,
        alpha,
        y_d,
        u_a,
        GridFunction::constant(&g, -1e3),
        GridFunction::zeros(&g),
        Cost::QuadraticTracking(u_d),
    )
}

const NONNEG_MATRIX_SEED: u64 = 0x5eed_0054;

/// `y_d = 0`, `u_a = w_a = 0`, `ζ = 1`, `f(u) = -∫u` on `(0, 1)`.
pub fn scenario_nostrong(n: usize, alpha: f64, variant: NostrongVariant) -> Result<IocProblem> {
    let g = Grid::uniform(0.0, 1.0, n)?;
    let (s_op, y_d) = match variant {
        NostrongVariant::Averaging => (Observation::Averaging { scale: alpha }, Target::Scalar(0.0)),
        NostrongVariant::NonnegMatrix => {
            let mut rng = ChaCha8Rng::seed_from_u64(NONNEG_MATRIX_SEED ^ n as u64);
            let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
            let norm: f64 = (b.transpose() * &b).symmetric_eigenvalues().max();
            let b = b * (alpha / norm).sqrt();
            (Observation::Operator(LinOp::Matrix(b)), Target::Function(GridFunction::zeros(&g)))
        }
    };
    IocProblem::new(
        g.clone(),
        s_op,
        alpha,
        y_d,
        GridFunction::zeros(&g),
        GridFunction::zeros(&g),
        GridFunction::constant(&g, 1.0),
        Cost::LinearIntegral(GridFunction::constant(&g, -1.0)),
    )
}

/// Closed-form sequences accompanying the dyadic-band example.
#[derive(Debug, Clone)]
pub struct Ex48Reference {
    pub bands: usize,
    /// Union of the resolved bands `[2^{-2k-1}, 2^{-2k}]`.
    pub omega_1: CellSet,
    /// `p_k = -2^{2k+2}·χ_{(2^{-2k-1}, 2^{-2k})}` for `k = 1..=bands`.
    pub p: Vec<GridFunction>,
    /// `v_k` from its piecewise formula at the midpoints.
    pub v: Vec<GridFunction>,
    /// `μ_k = χ_{Ω₁}(-A*p_k)`.
    pub mu: Vec<GridFunction>,
    /// `F_u^k = χ_{Ω₂}(-p_k - S*v_k)`, the printed chain with the formula `v_k`.
    pub f_u: Vec<GridFunction>,
    /// `v_0(ω) = |ω| - 1`.
    pub v0: GridFunction,
}

impl Ex48Reference {
    /// Tuple `(p_k, μ_k, ν_k = p_k, λ_k = p_k)` for band `k ≥ 1`.
    pub fn multipliers(&self, k: usize) -> KktMultipliers {
        let p = self.p[k - 1].clone();
        KktMultipliers {
            mu: self.mu[k - 1].clone(),
            nu: p.clone(),
            lam: p.clone(),
            p,
        }
    }
}

pub fn ex48_c(k: usize) -> f64 {
    -1.0 + 3.0 * 2f64.powi(-2 * k as i32 - 2)
}

/// Piecewise closed form of `S p_k`.
pub fn ex48_v(k: usize, x: f64) -> f64 {
    let c = ex48_c(k);
    let lo = 2f64.powi(-2 * k as i32 - 1);
    let hi = 2f64.powi(-2 * k as i32);
    if x <= lo {
        c * (x + 1.0)
    } else if x < hi {
        c + lo + (c - 2.0) * x + 2f64.powi(2 * k as i32 + 1) * x * x
    } else {
        (c + 2.0) * (x - 1.0)
    }
}

/// Largest number of bands resolvable on `n` cells: `⌊log₄ n⌋ - 1`.
pub fn ex48_max_bands(n: usize) -> usize {
    let mut k: usize = 0;
    while 4usize.pow(k as u32 + 1) <= n {
        k += 1;
    }
    k.saturating_sub(1)
}

/// Dyadic-band example on `(-1, 1)` with `A = I + S*S`, `S = (-Δ₀)⁻¹`.
pub fn scenario_ex48(n: usize, bands: usize) -> Result<(MpccLinProblem, Ex48Reference)> {
    if n < 64 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("n must be a power of two ≥ 64, got {n}")));
    }
    if bands == 0 || bands > ex48_max_bands(n) {
        return Err(Error::InvalidArgument(format!(
            "{bands} bands are not resolvable on {n} cells (at most {})",
            ex48_max_bands(n)
        )));
    }
    let g = Grid::uniform(-1.0, 1.0, n)?;
    let in_band = |k: usize, x: f64| x >= 2f64.powi(-2 * k as i32 - 1) && x <= 2f64.powi(-2 * k as i32);
    let omega_1 = CellSet::from_predicate(&g, |x| (1..=bands).any(|k| in_band(k, x)));
    let omega_2 = omega_1.complement();
    let s = LinOp::inverse_laplacian(&g)?;
    let a = alpha_plus(1.0, LinOp::GramComposition(Box::new(s.clone())));
    let f_u = GridFunction::from_fn(&g, |x| x.abs().powi(3) / 6.0 - x * x / 2.0 + 1.0 / 3.0)?.restrict(&omega_2)?;
    let z = GridFunction::zeros(&g);
    let prob = MpccLinProblem::new(
        a.clone(),
        f_u,
        z.clone(),
        z,
        CellSet::empty(&g),
        omega_1.clone(),
        omega_2.clone(),
        omega_1.clone(),
    )?;
    let mut r = Ex48Reference {
        bands,
        omega_1: omega_1.clone(),
        p: Vec::new(),
        v: Vec::new(),
        mu: Vec::new(),
        f_u: Vec::new(),
        v0: GridFunction::from_fn(&g, |x| x.abs() - 1.0)?,
    };
    for k in 1..=bands {
        let height = -2f64.powi(2 * k as i32 + 2);
        let p = GridFunction::from_fn(&g, |x| if in_band(k, x) { height } else { 0.0 })?;
        let v = GridFunction::from_fn(&g, |x| ex48_v(k, x))?;
        let ap = a.apply_adjoint(&p)?;
        r.mu.push(ap.scale(-1.0).restrict(&omega_1)?);
        r.f_u.push(p.add(&s.apply_adjoint(&v)?)?.scale(-1.0).restrict(&omega_2)?);
        r.p.push(p);
        r.v.push(v);
    }
    Ok((prob, r))
}

/// One grid size of the dyadic-band battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ex48Row {
    pub n: usize,
    pub bands: usize,
    pub lp_status: LpStatus,
    /// Optimal value of the multiplier LP at `β = Ω₁`, when it has one.
    pub lp_value: Option<f64>,
    /// Largest residual of the printed tuples in the `Ω₁` system, each with
    /// its own cost `F_u^k`.
    pub tuple_residual: f64,
    /// Minimal `⟨1, |p|⟩` for the limit cost; `None` when no multiplier exists.
    pub min_l1_p: Option<f64>,
}

/// Runs the dyadic-band checks on `n` cells with `min(bands, resolvable)` bands.
pub fn ex48_row(n: usize, bands: usize) -> Result<Ex48Row> {
    let k_max = bands.min(ex48_max_bands(n));
    let (prob, r) = scenario_ex48(n, k_max)?;
    let lp = solve_lp_beta(&prob, &r.omega_1)?;
    let mut tuple_residual: f64 = 0.0;
    for k in 1..=k_max {
        let mut pk = prob.clone();
        pk.f_u = r.f_u[k - 1].clone();
        let res = kkt_residuals(&pk, &r.multipliers(k), SignSystem::Beta(&r.omega_1))?;
        tuple_residual = tuple_residual.max(res.max());
    }
    Ok(Ex48Row {
        n,
        bands: k_max,
        lp_value: (lp.status == LpStatus::Optimal).then_some(lp.objective_value),
        lp_status: lp.status,
        tuple_residual,
        min_l1_p: min_l1_multiplier(&prob, &r.omega_1)?.map(|(v, _)| v),
    })
}
