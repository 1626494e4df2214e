//! A_β multiplier families over all subsets of the biactive set and their
//! convex combination into M-stationary multipliers.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{CellSet, GridFunction};
use crate::lp::{lp_solve, LpProblem, LpStatus};
use crate::mpcc_lin::{solve_kkt_beta, solve_kkt_system, CellSign, KktMultipliers, KktOutcome, MpccLinProblem, SignSystem};
use crate::normalize::normalize_dispatch;
use crate::stationarity::{
    check_abeta_certificate, check_m, check_m_condition, check_s_certificate, check_weak, kkt_residuals,
    CertificateKind, Residuals, StationarityCertificate,
};

pub const DEFAULT_CAP: usize = 12;

pub type SignPattern = Vec<CellSign>;

/// Certified pointwise bound `constant · function`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierBound {
    pub constant: f64,
    pub function: GridFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyMember {
    pub beta: CellSet,
    pub mult: KktMultipliers,
    /// `None` when the operator admits no normalization.
    pub bound: Option<MultiplierBound>,
}

#[derive(Debug, Clone)]
pub struct MultiplierFamily {
    pub problem: MpccLinProblem,
    /// Ordered by the bitmask of `β` over `biactive_cells`.
    pub members: Vec<FamilyMember>,
    pub biactive_cells: Vec<usize>,
}

impl MultiplierFamily {
    pub fn is_normalized(&self) -> bool {
        self.members.iter().all(|m| m.bound.is_some())
    }
}

fn beta_from_mask(prob: &MpccLinProblem, cells: &[usize], mask: u64) -> Result<CellSet> {
    let idx: Vec<usize> = cells.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &i)| i).collect();
    CellSet::from_indices(prob.grid(), &idx)
}

/// Solves the A_β system for every `β ⊆ Ω⁰⁰` and normalizes each solution.
pub fn enumerate_family(prob: &MpccLinProblem, cap: usize) -> Result<MultiplierFamily> {
    let cells = prob.omega_00.indices();
    let m = cells.len();
    if m > cap || m >= 63 {
        return Err(Error::ProblemTooLarge { m, cap });
    }
    log::info!("enumerating {} subsets of {m} biactive cells", 1u64 << m);
    let outcomes: Vec<Result<Option<FamilyMember>>> = (0..1u64 << m)
        .into_par_iter()
        .map(|mask| {
            let beta = beta_from_mask(prob, &cells, mask)?;
            let m0 = match solve_kkt_beta(prob, &beta)? {
                KktOutcome::Found(m0) => m0,
                KktOutcome::Infeasible => return Ok(None),
            };
            match normalize_dispatch(prob, &beta, &m0) {
                Ok(nm) => Ok(Some(FamilyMember {
                    beta,
                    mult: nm.mult,
                    bound: Some(MultiplierBound {
                        constant: nm.bound_constant,
                        function: nm.c0,
                    }),
                })),
                Err(Error::UnsupportedOperator(_)) => Ok(Some(FamilyMember {
                    beta,
                    mult: m0,
                    bound: None,
                })),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut members = Vec::with_capacity(outcomes.len());
    for (mask, o) in outcomes.into_iter().enumerate() {
        match o? {
            Some(member) => members.push(member),
            None => {
                let beta = beta_from_mask(prob, &cells, mask as u64)?;
                return Err(Error::NotAForallStationary { beta: beta.indices() });
            }
        }
    }
    if members.iter().any(|m| m.bound.is_none()) {
        log::warn!("operator admits no multiplier normalization; family left unnormalized");
    }
    Ok(MultiplierFamily {
        problem: prob.clone(),
        members,
        biactive_cells: cells,
    })
}

/// A_∀ certificate: the worst A_β residual over the family.
pub fn aforall_certificate(family: &MultiplierFamily, tol: f64) -> Result<StationarityCertificate> {
    let mut worst = Residuals::default();
    for m in &family.members {
        let r = kkt_residuals(&family.problem, &m.mult, SignSystem::Beta(&m.beta))?;
        for (k, v) in r.0 {
            let e = worst.0.entry(k).or_insert(0.0);
            *e = e.max(v);
        }
    }
    let mut c = StationarityCertificate::new(CertificateKind::Aforall, worst, tol, None);
    if !family.is_normalized() {
        c = c.with_flag("unnormalized_family");
    }
    Ok(c)
}

/// Feasibility LP over convex weights for the first `prefix.len()` biactive
/// cells of the family. Returns the weights when feasible.
fn pattern_lp(family: &MultiplierFamily, prefix: &[CellSign]) -> Result<Option<Vec<f64>>> {
    let k = family.members.len();
    let nbn = prefix.iter().filter(|s| **s == CellSign::BothNonpositive).count();
    let nv = k + 2 * nbn;
    let mut lp = LpProblem::new(nv);
    for b in lp.var_bounds.iter_mut() {
        *b = (0.0, f64::INFINITY);
    }
    lp.add_row((0..nv).map(|j| if j < k { 1.0 } else { 0.0 }).collect(), 1.0);
    let mut slack = k;
    let mut add = |lp: &mut LpProblem, coeffs: Vec<f64>, with_slack: bool| {
        let s = 1.0 + coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut row: Vec<f64> = coeffs.iter().map(|v| v / s).collect();
        row.resize(nv, 0.0);
        if with_slack {
            row[slack] = 1.0;
            slack += 1;
        }
        lp.add_row(row, 0.0);
    };
    for (&cell, sign) in family.biactive_cells.iter().zip(prefix) {
        let mu: Vec<f64> = family.members.iter().map(|m| m.mult.mu.values()[cell]).collect();
        let nu: Vec<f64> = family.members.iter().map(|m| m.mult.nu.values()[cell]).collect();
        match sign {
            CellSign::BothNonpositive => {
                add(&mut lp, mu, true);
                add(&mut lp, nu, true);
            }
            CellSign::MuZero => add(&mut lp, mu, false),
            CellSign::NuZero => add(&mut lp, nu, false),
        }
    }
    let r = lp_solve(&lp)?;
    Ok(match r.status {
        LpStatus::Optimal => Some(r.point[..k].iter().map(|w| w.max(0.0)).collect()),
        _ => None,
    })
}

/// Result of [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub mult: KktMultipliers,
    pub weights: Vec<f64>,
    pub pattern: SignPattern,
}

/// First sign pattern in lexicographic order admitting a convex combination
/// of the family; prefixes without one are pruned.
pub fn synthesize(family: &MultiplierFamily, tol: f64) -> Result<Synthesis> {
    if family.members.is_empty() {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    let m = family.biactive_cells.len();
    let mut prefix: SignPattern = Vec::with_capacity(m);
    let mut explored = 0usize;
    let found = dfs(family, &mut prefix, &mut explored)?;
    log::debug!("pattern search solved {explored} LPs");
    let (pattern, weights) = found.ok_or(Error::SynthesisFailed)?;
    let refs: Vec<&KktMultipliers> = family.members.iter().map(|m| &m.mult).collect();
    let mult = KktMultipliers::combine(&weights, &refs)?;
    let prob = &family.problem;
    if !check_m_condition(&mult.mu, &mult.nu, &prob.omega_00, tol) {
        return Err(Error::Internal("combined multipliers violate the M-condition".into()));
    }
    let r = kkt_residuals(prob, &mult, SignSystem::Weak)?;
    let scale = 1.0 + mult.pointwise_max_abs().max_abs();
    if r.max() > tol * scale {
        return Err(Error::Internal(format!("combined multipliers violate the weak system by {:e}", r.max())));
    }
    Ok(Synthesis { mult, weights, pattern })
}

fn dfs(family: &MultiplierFamily, prefix: &mut SignPattern, explored: &mut usize) -> Result<Option<(SignPattern, Vec<f64>)>> {
    if family.biactive_cells.is_empty() {
        return Ok(pattern_lp(family, &[])?.map(|w| (Vec::new(), w)));
    }
    for s in CellSign::ALL {
        prefix.push(s);
        *explored += 1;
        if let Some(w) = pattern_lp(family, prefix)? {
            if prefix.len() == family.biactive_cells.len() {
                return Ok(Some((prefix.clone(), w)));
            }
            if let Some(hit) = dfs(family, prefix, explored)? {
                return Ok(Some(hit));
            }
        }
        prefix.pop();
    }
    Ok(None)
}

/// One row of the `--all-patterns` dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternDiagnostic {
    pub pattern: SignPattern,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Feasibility of every pattern in lexicographic order. Patterns below an
/// infeasible prefix are reported infeasible without solving.
pub fn all_patterns(family: &MultiplierFamily) -> Result<Vec<PatternDiagnostic>> {
    let m = family.biactive_cells.len();
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(m);
    if m == 0 {
        let w = pattern_lp(family, &[])?;
        out.push(PatternDiagnostic { pattern: vec![], feasible: w.is_some(), weights: w });
        return Ok(out);
    }
    walk_all(family, &mut prefix, true, &mut out)?;
    Ok(out)
}

fn walk_all(family: &MultiplierFamily, prefix: &mut SignPattern, alive: bool, out: &mut Vec<PatternDiagnostic>) -> Result<()> {
    for s in CellSign::ALL {
        prefix.push(s);
        let w = if alive { pattern_lp(family, prefix)? } else { None };
        if prefix.len() == family.biactive_cells.len() {
            out.push(PatternDiagnostic {
                pattern: prefix.clone(),
                feasible: w.is_some(),
                weights: w,
            });
        } else {
            walk_all(family, prefix, w.is_some(), out)?;
        }
        prefix.pop();
    }
    Ok(())
}

/// Enumerates the family, synthesizes M-multipliers and checks them.
pub fn certify_m(prob: &MpccLinProblem, cap: usize, tol: f64) -> Result<StationarityCertificate> {
    let family = enumerate_family(prob, cap)?;
    let s = synthesize(&family, tol)?;
    let mut c = check_m(prob, &s.mult, tol)?;
    if !family.is_normalized() {
        c = c.with_flag("unnormalized_family");
    }
    Ok(c)
}

/// Certificate of the requested kind for the linear problem. `Abeta` needs
/// `beta`; infeasible multiplier systems give a refuted certificate.
pub fn certify_kind(
    prob: &MpccLinProblem,
    kind: CertificateKind,
    beta: Option<&CellSet>,
    cap: usize,
    tol: f64,
) -> Result<StationarityCertificate> {
    let infeasible = || StationarityCertificate::refuted(kind, tol, "multiplier_system_infeasible");
    let not_aforall = |beta: Vec<usize>| {
        let mut c = StationarityCertificate::refuted(kind, tol, "not_a_forall_stationary");
        c.beta = Some(beta);
        c
    };
    match kind {
        CertificateKind::Weak => match solve_kkt_system(prob, SignSystem::Weak)? {
            KktOutcome::Found(m) => check_weak(prob, &m, tol),
            KktOutcome::Infeasible => Ok(infeasible()),
        },
        CertificateKind::S => match solve_kkt_system(prob, SignSystem::Strong)? {
            KktOutcome::Found(m) => check_s_certificate(prob, &m, tol),
            KktOutcome::Infeasible => Ok(infeasible()),
        },
        CertificateKind::Abeta => {
            let beta = beta.ok_or_else(|| Error::InvalidArgument("A_β certification needs a set β".into()))?;
            prob.check_beta(beta)?;
            match solve_kkt_beta(prob, beta)? {
                KktOutcome::Found(m) => check_abeta_certificate(prob, &m, beta, tol),
                KktOutcome::Infeasible => {
                    let mut c = infeasible();
                    c.beta = Some(beta.indices());
                    Ok(c)
                }
            }
        }
        CertificateKind::Aforall => match enumerate_family(prob, cap) {
            Ok(f) => aforall_certificate(&f, tol),
            Err(Error::NotAForallStationary { beta }) => Ok(not_aforall(beta)),
            Err(e) => Err(e),
        },
        CertificateKind::M => match certify_m(prob, cap, tol) {
            Err(Error::NotAForallStationary { beta }) => Ok(not_aforall(beta)),
            Err(Error::SynthesisFailed) => Ok(StationarityCertificate::refuted(kind, tol, "synthesis_failed")),
            other => other,
        },
    }
}

/// The M-system with one fixed closed branch per biactive cell, solved
/// directly as a multiplier LP without a family.
pub fn solve_m_pattern(prob: &MpccLinProblem, pattern: &[CellSign]) -> Result<KktOutcome> {
    solve_kkt_system(prob, SignSystem::Pattern(pattern))
}
