//! Pointwise checkers for the stationarity systems of the linear MPCC.
//!
//! All systems share the three equations and the conditions on `λ`, on `μ`
//! over `Ω⁺⁰` and on `ν` over `Ω⁰⁺`; they differ only in the signs of `(μ, ν)`
//! on the biactive set:
//!
//! | system | biactive condition                                   |
//! |--------|------------------------------------------------------|
//! | weak   | none                                                 |
//! | A_β    | `μ ≤ 0` on `Ω⁰⁰ \ β`, `ν ≤ 0` on `β`                  |
//! | M      | `(μ < 0 ∧ ν < 0) ∨ μν = 0`                           |
//! | S      | `μ ≤ 0`, `ν ≤ 0`                                     |

use std::collections::BTreeMap;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{CellSet, GridFunction};
use crate::mpcc_lin::{KktMultipliers, MpccLinProblem, SignSystem};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Weak,
    Abeta,
    Aforall,
    M,
    S,
}

/// Named maximal violations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Residuals(pub BTreeMap<String, f64>);

impl Residuals {
    pub fn insert(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn max(&self) -> f64 {
        self.0.values().fold(0.0, |m, &v| if v.is_nan() { f64::INFINITY } else { m.max(v) })
    }

    /// Largest value among the three stationarity equations.
    pub fn equations_max(&self) -> f64 {
        ["stationarity_u", "stationarity_w", "stationarity_xi"]
            .iter()
            .filter_map(|k| self.get(k))
            .fold(0.0, f64::max)
    }
}

/// A checkable verdict with the multipliers that support it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityCertificate {
    pub kind: CertificateKind,
    pub verdict: bool,
    pub tol: f64,
    pub residuals: Residuals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<KktMultipliers>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl StationarityCertificate {
    pub fn new(kind: CertificateKind, residuals: Residuals, tol: f64, multipliers: Option<KktMultipliers>) -> Self {
        let verdict = residuals.0.values().all(|&v| v <= tol);
        StationarityCertificate {
            kind,
            verdict,
            tol,
            residuals,
            multipliers,
            beta: None,
            flags: Vec::new(),
        }
    }

    /// Verdict false, no multipliers, the reason as a flag.
    pub fn refuted(kind: CertificateKind, tol: f64, reason: &str) -> Self {
        let mut c = StationarityCertificate::new(kind, Residuals::default(), tol, None);
        c.verdict = false;
        c.with_flag(reason)
    }

    pub fn with_flag(mut self, flag: &str) -> Self {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
        self
    }
}

impl Serialize for KktMultipliers {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("KktMultipliers", 4)?;
        st.serialize_field("p", self.p.values())?;
        st.serialize_field("mu", self.mu.values())?;
        st.serialize_field("nu", self.nu.values())?;
        st.serialize_field("lambda", self.lam.values())?;
        st.end()
    }
}

fn max_over(set: &CellSet, f: impl Fn(usize) -> f64) -> f64 {
    set.mask()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| f(i))
        .fold(0.0, f64::max)
}

/// Residuals of the multiplier system with the given biactive sign rule,
/// evaluated directly from the operator (no LP involved).
pub fn kkt_residuals(prob: &MpccLinProblem, m: &KktMultipliers, signs: SignSystem<'_>) -> Result<Residuals> {
    let g = prob.grid();
    for f in [&m.p, &m.mu, &m.nu, &m.lam] {
        if !crate::grid::same_grid(g, f.grid()) {
            return Err(Error::InvalidArgument("multipliers live on another grid".into()));
        }
    }
    let mut r = Residuals::default();
    let eq_u = prob.f_u.add(&prob.a_op.apply_adjoint(&m.p)?)?.add(&m.mu)?;
    let eq_w = prob.f_w.sub(&m.p)?.add(&m.lam)?;
    let eq_xi = prob.f_xi.sub(&m.p)?.add(&m.nu)?;
    r.insert("stationarity_u", eq_u.max_abs());
    r.insert("stationarity_w", eq_w.max_abs());
    r.insert("stationarity_xi", eq_xi.max_abs());
    let (mu, nu, lam) = (m.mu.values(), m.nu.values(), m.lam.values());
    r.insert("lambda_sign_on_omega_w", max_over(&prob.omega_w, |i| lam[i].max(0.0)));
    r.insert("lambda_zero_off_omega_w", max_over(&prob.omega_w.complement(), |i| lam[i].abs()));
    r.insert("mu_zero_on_omega_p0", max_over(&prob.omega_p0, |i| mu[i].abs()));
    r.insert("nu_zero_on_omega_0p", max_over(&prob.omega_0p, |i| nu[i].abs()));
    match signs {
        SignSystem::Weak => {}
        SignSystem::Beta(_) => {
            let f = prob.sign_flags(signs)?;
            r.insert("mu_sign_off_beta", max_over(&prob.omega_00, |i| if f[i][0] { mu[i].max(0.0) } else { 0.0 }));
            r.insert("nu_sign_on_beta", max_over(&prob.omega_00, |i| if f[i][1] { nu[i].max(0.0) } else { 0.0 }));
        }
        SignSystem::Strong => {
            r.insert("mu_sign_biactive", max_over(&prob.omega_00, |i| mu[i].max(0.0)));
            r.insert("nu_sign_biactive", max_over(&prob.omega_00, |i| nu[i].max(0.0)));
        }
        SignSystem::Pattern(_) => {
            let f = prob.sign_flags(signs)?;
            let cell = |i: usize| {
                let [a, b, c, d] = f[i];
                let mut v: f64 = 0.0;
                if a {
                    v = v.max(mu[i]);
                }
                if b {
                    v = v.max(nu[i]);
                }
                if c {
                    v = v.max(mu[i].abs());
                }
                if d {
                    v = v.max(nu[i].abs());
                }
                v
            };
            r.insert("sign_pattern", max_over(&prob.omega_00, cell));
        }
    }
    Ok(r)
}

/// Per-cell violation of the M-disjunction; zero where both multipliers are
/// below `-tol`, the relative product `|μν| / (1+|μ|+|ν|)` elsewhere.
pub fn m_condition_residual(mu: &GridFunction, nu: &GridFunction, biactive: &CellSet, tol: f64) -> f64 {
    let (mu, nu) = (mu.values(), nu.values());
    max_over(biactive, |i| {
        let (a, b) = (mu[i], nu[i]);
        if a < -tol && b < -tol {
            0.0
        } else {
            (a * b).abs() / (1.0 + a.abs() + b.abs())
        }
    })
}

pub fn check_m_condition(mu: &GridFunction, nu: &GridFunction, biactive: &CellSet, tol: f64) -> bool {
    m_condition_residual(mu, nu, biactive, tol) <= tol
}

pub fn check_s(mu: &GridFunction, nu: &GridFunction, biactive: &CellSet, tol: f64) -> bool {
    let (mu, nu) = (mu.values(), nu.values());
    biactive.indices().iter().all(|&i| mu[i] <= tol && nu[i] <= tol)
}

pub fn check_abeta(mu: &GridFunction, nu: &GridFunction, biactive: &CellSet, beta: &CellSet, tol: f64) -> bool {
    let (m, n) = (mu.values(), nu.values());
    biactive
        .indices()
        .iter()
        .all(|&i| if beta.contains(i) { n[i] <= tol } else { m[i] <= tol })
}

pub fn check_weak(prob: &MpccLinProblem, m: &KktMultipliers, tol: f64) -> Result<StationarityCertificate> {
    let r = kkt_residuals(prob, m, SignSystem::Weak)?;
    Ok(StationarityCertificate::new(CertificateKind::Weak, r, tol, Some(m.clone())))
}

pub fn check_abeta_certificate(
    prob: &MpccLinProblem,
    m: &KktMultipliers,
    beta: &CellSet,
    tol: f64,
) -> Result<StationarityCertificate> {
    let r = kkt_residuals(prob, m, SignSystem::Beta(beta))?;
    let mut c = StationarityCertificate::new(CertificateKind::Abeta, r, tol, Some(m.clone()));
    c.beta = Some(beta.indices());
    Ok(c)
}

/// Weak residuals plus the M-disjunction on the biactive set.
pub fn check_m(prob: &MpccLinProblem, m: &KktMultipliers, tol: f64) -> Result<StationarityCertificate> {
    let mut r = kkt_residuals(prob, m, SignSystem::Weak)?;
    r.insert("m_condition", m_condition_residual(&m.mu, &m.nu, &prob.omega_00, tol));
    Ok(StationarityCertificate::new(CertificateKind::M, r, tol, Some(m.clone())))
}

pub fn check_s_certificate(prob: &MpccLinProblem, m: &KktMultipliers, tol: f64) -> Result<StationarityCertificate> {
    let r = kkt_residuals(prob, m, SignSystem::Strong)?;
    Ok(StationarityCertificate::new(CertificateKind::S, r, tol, Some(m.clone())))
}

/// Strongly active, inactive and biactive cells of a lower-level point.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSets {
    /// `{ξ > tol}`
    pub strongly_active: CellSet,
    /// `{u - u_a > tol}`
    pub inactive: CellSet,
    pub biactive: CellSet,
}

pub fn classify_active_sets(u: &GridFunction, xi: &GridFunction, u_a: &GridFunction, tol: f64) -> Result<ActiveSets> {
    let g = u.grid();
    let gap = u.sub(u_a)?;
    if !crate::grid::same_grid(g, xi.grid()) {
        return Err(Error::InvalidArgument("ξ lives on another grid".into()));
    }
    let n = g.len();
    let mut sa = vec![false; n];
    let mut ina = vec![false; n];
    let mut bi = vec![false; n];
    for i in 0..n {
        let (s, x) = (gap.values()[i], xi.values()[i]);
        if s < -tol || x < -tol || s.min(x) > tol {
            return Err(Error::InvalidPoint(format!(
                "complementarity violated at cell {i}: u - u_a = {s:e}, ξ = {x:e}"
            )));
        }
        if x > tol {
            sa[i] = true;
        } else if s > tol {
            ina[i] = true;
        } else {
            bi[i] = true;
        }
    }
    Ok(ActiveSets {
        strongly_active: CellSet::new(g.clone(), sa)?,
        inactive: CellSet::new(g.clone(), ina)?,
        biactive: CellSet::new(g.clone(), bi)?,
    })
}
