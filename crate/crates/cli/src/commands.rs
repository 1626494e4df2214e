use std::path::Path;

use mstat_core::ioc::{
    build_kktr_point, certify_ioc_kind, certify_ioc_pattern, ex48_row, kktr_m_residuals, linearize,
    scenario_nostrong, IocProblem, NostrongVariant,
};
use mstat_core::lower_level::solve_oc;
use mstat_core::mpcc_lin::{solve_kkt_beta, solve_lp_beta, CellSign, KktMultipliers, KktOutcome, MpccLinProblem};
use mstat_core::operators::assemble_dense;
use mstat_core::regularization::{run_reg_path, Schedule};
use mstat_core::stationarity::{check_abeta_certificate, check_m, CertificateKind, StationarityCertificate};
use mstat_core::synthesis::{all_patterns, certify_kind, enumerate_family, solve_m_pattern, synthesize};
use mstat_core::{CellSet, Error, GridFunction};
use serde_json::{json, Value};

use crate::problem::{load, Inputs, Problem};
use crate::report::to_value;
use crate::CliError;

/// What a command hands back to `main`: the verdict deciding the exit code,
/// the JSON result, an optional CSV trace and the input hash.
pub struct Outcome {
    pub verdict: bool,
    pub result: Value,
    pub csv: Option<String>,
    pub input_sha256: String,
}

pub struct Settings {
    pub tol: f64,
    pub cap: usize,
    pub all_patterns: bool,
}

const UNIFORM_PATTERNS: [(CellSign, &str); 3] = [
    (CellSign::BothNonpositive, "both_nonpositive_everywhere"),
    (CellSign::MuZero, "mu_zero_everywhere"),
    (CellSign::NuZero, "nu_zero_everywhere"),
];

fn read_w(inputs: &mut Inputs, ioc: &IocProblem, w: Option<&Path>) -> Result<GridFunction, CliError> {
    let w = w.ok_or_else(|| CliError::Invalid("this problem needs `--w`".into()))?;
    inputs.grid_function(&ioc.grid, w)
}

fn beta_set(prob: &MpccLinProblem, beta: Option<&[usize]>) -> Result<Option<CellSet>, CliError> {
    beta.map(|b| CellSet::from_indices(prob.grid(), b).map_err(CliError::from)).transpose()
}

fn certificate(c: StationarityCertificate, inputs: &Inputs) -> Result<Outcome, CliError> {
    Ok(Outcome {
        verdict: c.verdict,
        result: to_value(&c)?,
        csv: None,
        input_sha256: inputs.sha256(),
    })
}

/// Uniform-branch M-certificate for the linear problem, used above the cap.
fn lin_pattern_certificate(prob: &MpccLinProblem, tol: f64) -> Result<StationarityCertificate, CliError> {
    let m = prob.omega_00.count();
    for (sign, _) in UNIFORM_PATTERNS {
        if let KktOutcome::Found(mult) = solve_m_pattern(prob, &vec![sign; m])? {
            let c = check_m(prob, &mult, tol)?.with_flag("fixed_pattern");
            if c.verdict {
                return Ok(c);
            }
        }
    }
    Ok(StationarityCertificate::refuted(CertificateKind::M, tol, "no_uniform_pattern_feasible"))
}

fn ioc_pattern_certificate(ioc: &IocProblem, w: &GridFunction, tol: f64) -> Result<StationarityCertificate, CliError> {
    for (sign, _) in UNIFORM_PATTERNS {
        let c = certify_ioc_pattern(ioc, w, sign, tol)?;
        if c.verdict {
            return Ok(c);
        }
    }
    Ok(StationarityCertificate::refuted(CertificateKind::M, tol, "no_uniform_pattern_feasible"))
}

pub fn certify(
    problem: &Path,
    w: Option<&Path>,
    kind: CertificateKind,
    beta: Option<&[usize]>,
    s: &Settings,
) -> Result<Outcome, CliError> {
    let (problem, mut inputs) = load(problem)?;
    let c = match problem {
        Problem::Lin(prob) => {
            let beta = beta_set(&prob, beta)?;
            match certify_kind(&prob, kind, beta.as_ref(), s.cap, s.tol) {
                Err(Error::ProblemTooLarge { .. }) if kind == CertificateKind::M => {
                    lin_pattern_certificate(&prob, s.tol)?.with_flag("family_over_cap")
                }
                other => other?,
            }
        }
        Problem::Ioc(ioc) => {
            if kind == CertificateKind::Abeta {
                return Err(CliError::Invalid("`--kind abeta` applies to [mpcc_lin] problems".into()));
            }
            let w = read_w(&mut inputs, &ioc, w)?;
            match certify_ioc_kind(&ioc, &w, kind, s.cap, s.tol) {
                Err(Error::ProblemTooLarge { .. }) if kind == CertificateKind::M => {
                    ioc_pattern_certificate(&ioc, &w, s.tol)?.with_flag("family_over_cap")
                }
                other => other?,
            }
        }
    };
    certificate(c, &inputs)
}

fn lin_only(problem: Problem) -> Result<MpccLinProblem, CliError> {
    match problem {
        Problem::Lin(p) => Ok(p),
        Problem::Ioc(_) => Err(CliError::Invalid("this command needs an [mpcc_lin] problem".into())),
    }
}

fn ioc_only(problem: Problem) -> Result<IocProblem, CliError> {
    match problem {
        Problem::Ioc(p) => Ok(p),
        Problem::Lin(_) => Err(CliError::Invalid("this command needs an [ioc] problem".into())),
    }
}

pub fn kkt_beta(problem: &Path, beta: &[usize], s: &Settings) -> Result<Outcome, CliError> {
    let (problem, inputs) = load(problem)?;
    let prob = lin_only(problem)?;
    let beta = CellSet::from_indices(prob.grid(), beta)?;
    prob.check_beta(&beta)?;
    let lp = solve_lp_beta(&prob, &beta)?;
    let kkt = solve_kkt_beta(&prob, &beta)?;
    let cert = match &kkt {
        KktOutcome::Found(m) => Some(check_abeta_certificate(&prob, m, &beta, s.tol)?),
        KktOutcome::Infeasible => None,
    };
    let verdict = cert.as_ref().is_some_and(|c| c.verdict);
    let lp_value = (lp.status == mstat_core::lp::LpStatus::Optimal).then_some(lp.objective_value);
    Ok(Outcome {
        verdict,
        result: json!({
            "beta": beta.indices(),
            "kkt_found": cert.is_some(),
            "certificate": cert,
            "lp_status": lp.status,
            "lp_value": lp_value,
            "lp_point": lp.point,
        }),
        csv: None,
        input_sha256: inputs.sha256(),
    })
}

/// The linear problem of an [ioc] file at `w`, or the [mpcc_lin] problem itself.
fn linear_problem(problem: Problem, inputs: &mut Inputs, w: Option<&Path>, tol: f64) -> Result<MpccLinProblem, CliError> {
    match problem {
        Problem::Lin(p) => Ok(p),
        Problem::Ioc(ioc) => {
            let w = read_w(inputs, &ioc, w)?;
            let pt = build_kktr_point(&ioc, &w)?;
            let neg_lap = ioc.neg_laplacian(&pt.w)?;
            Ok(linearize(&ioc, &pt, &ioc.f_prime(&pt.u)?, &neg_lap, tol)?)
        }
    }
}

pub fn synthesize_cmd(problem: &Path, w: Option<&Path>, s: &Settings) -> Result<Outcome, CliError> {
    let (problem, mut inputs) = load(problem)?;
    let prob = linear_problem(problem, &mut inputs, w, s.tol)?;
    let family = enumerate_family(&prob, s.cap)?;
    let members: Vec<Value> = family
        .members
        .iter()
        .map(|m| json!({"beta": m.beta.indices(), "bound_constant": m.bound.as_ref().map(|b| b.constant)}))
        .collect();
    let patterns = if s.all_patterns { Some(all_patterns(&family)?) } else { None };
    let (verdict, synthesis) = match synthesize(&family, s.tol) {
        Ok(syn) => {
            let c = check_m(&prob, &syn.mult, s.tol)?;
            (c.verdict, json!({"pattern": syn.pattern, "weights": syn.weights, "certificate": c}))
        }
        Err(Error::SynthesisFailed) => (false, Value::Null),
        Err(e) => return Err(e.into()),
    };
    Ok(Outcome {
        verdict,
        result: json!({
            "biactive_cells": family.biactive_cells,
            "normalized": family.is_normalized(),
            "members": members,
            "synthesis": synthesis,
            "patterns": patterns,
        }),
        csv: None,
        input_sha256: inputs.sha256(),
    })
}

pub fn lower_solve(problem: &Path, w: &Path, s: &Settings) -> Result<Outcome, CliError> {
    let (problem, mut inputs) = load(problem)?;
    let ioc = ioc_only(problem)?;
    let w = read_w(&mut inputs, &ioc, Some(w))?;
    let sol = solve_oc(&ioc, &w)?;
    let mut csv = Vec::new();
    sol.u.write_csv(&mut csv)?;
    Ok(Outcome {
        verdict: sol.vi_residual <= s.tol,
        result: json!({
            "u": sol.u.values(),
            "xi": sol.xi.values(),
            "vi_residual": sol.vi_residual,
            "strongly_active": sol.active_sets.strongly_active.indices(),
            "biactive": sol.active_sets.biactive.indices(),
            "inactive": sol.active_sets.inactive.indices(),
        }),
        csv: Some(String::from_utf8(csv).expect("CSV is ASCII")),
        input_sha256: inputs.sha256(),
    })
}

pub fn regpath(problem: &Path, w: &Path, schedule: Schedule) -> Result<Outcome, CliError> {
    schedule.gammas().map_err(CliError::from)?;
    let (problem, mut inputs) = load(problem)?;
    let ioc = ioc_only(problem)?;
    let w = read_w(&mut inputs, &ioc, Some(w))?;
    let report = run_reg_path(&ioc, &w, schedule)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    Ok(Outcome {
        verdict: report.errors_to_vi.iter().all(|e| e.is_finite()),
        result: json!({"schedule": schedule, "path": report}),
        csv: Some(String::from_utf8(csv).expect("CSV is ASCII")),
        input_sha256: inputs.sha256(),
    })
}

#[derive(serde::Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: Value,
}

fn check(name: impl Into<String>, pass: bool, detail: Value) -> Check {
    Check { name: name.into(), pass, detail }
}

fn battery(checks: Vec<Check>, extra: Value, csv: String) -> Result<Outcome, CliError> {
    Ok(Outcome {
        verdict: checks.iter().all(|c| c.pass),
        result: json!({"checks": checks, "data": extra}),
        csv: Some(csv),
        input_sha256: String::new(),
    })
}

pub fn ex48_battery(ns: &[usize], bands: usize) -> Result<Outcome, CliError> {
    let mut rows = Vec::new();
    for &n in ns {
        log::info!("dyadic bands at n = {n}");
        rows.push(ex48_row(n, bands)?);
    }
    let mut csv = String::from("n,min_l1_p\n");
    for r in &rows {
        match r.min_l1_p {
            Some(v) => csv.push_str(&format!("{},{:e}\n", r.n, v)),
            None => csv.push_str(&format!("{},inf\n", r.n)),
        }
    }
    let lp_ok = rows.iter().all(|r| r.lp_value.is_some_and(|v| v.abs() <= 1e-8));
    let orders: Vec<f64> = rows
        .windows(2)
        .map(|p| (p[0].tuple_residual / p[1].tuple_residual).ln() / (p[1].n as f64 / p[0].n as f64).ln())
        .collect();
    let l1: Vec<f64> = rows.iter().map(|r| r.min_l1_p.unwrap_or(f64::INFINITY)).collect();
    let increasing = l1.windows(2).all(|p| p[0] < p[1]);
    let checks = vec![
        check("lp_value_zero_at_omega_1", lp_ok, to_value(&rows.iter().map(|r| (r.lp_status, r.lp_value)).collect::<Vec<_>>())?),
        check(
            "printed_tuples_first_order",
            !orders.is_empty() && orders.iter().all(|&o| o >= 0.9),
            json!({"residuals": rows.iter().map(|r| r.tuple_residual).collect::<Vec<_>>(), "orders": orders}),
        ),
        check("min_l1_strictly_increasing", ns.len() >= 2 && increasing, to_value(&l1.iter().map(|v| if v.is_finite() { Some(*v) } else { None }).collect::<Vec<_>>())?),
    ];
    battery(checks, to_value(&rows)?, csv)
}

/// `(p, ν, μ, λ) = (0, 0, 1, -1)` in the reformulation.
fn explicit_multipliers(ioc: &IocProblem) -> KktMultipliers {
    let g = &ioc.grid;
    KktMultipliers {
        p: GridFunction::zeros(g),
        nu: GridFunction::zeros(g),
        mu: GridFunction::constant(g, 1.0),
        lam: GridFunction::constant(g, -1.0),
    }
}

/// `p` solving the adjoint equation with `μ = 0`.
pub fn mu_zero_adjoint(ioc: &IocProblem) -> Result<GridFunction, CliError> {
    let w = GridFunction::zeros(&ioc.grid);
    let u = solve_oc(ioc, &w)?.u;
    let a = assemble_dense(&ioc.hessian(), &ioc.grid)?;
    let rhs = nalgebra::DVector::from_vec(ioc.f_prime(&u)?.scale(-1.0).into_values());
    let p = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CliError::Failed("adjoint operator is singular".into()))?;
    Ok(GridFunction::new(ioc.grid.clone(), p.iter().copied().collect())?)
}

pub fn nostrong_battery(n: usize, alpha: f64, variants: &[NostrongVariant], s: &Settings) -> Result<Outcome, CliError> {
    let mut checks = Vec::new();
    let mut csv = String::from("variant,pattern,feasible\n");
    for &variant in variants {
        let tag = match variant {
            NostrongVariant::Averaging => "averaging",
            NostrongVariant::NonnegMatrix => "nonneg_matrix",
        };
        let ioc = scenario_nostrong(n, alpha, variant)?;
        let w = GridFunction::zeros(&ioc.grid);

        let strong = certify_ioc_kind(&ioc, &w, CertificateKind::S, s.cap, s.tol)?;
        checks.push(check(format!("{tag}/strong_refuted"), !strong.verdict, json!({"flags": strong.flags})));

        let pt = build_kktr_point(&ioc, &w)?;
        let neg_lap = ioc.neg_laplacian(&pt.w)?;
        let r = kktr_m_residuals(&ioc, &pt, &explicit_multipliers(&ioc), &neg_lap, s.tol)?;
        checks.push(check(format!("{tag}/explicit_multipliers"), r.max() <= 1e-10, to_value(&r)?));

        let m = if n <= s.cap {
            certify_ioc_kind(&ioc, &w, CertificateKind::M, s.cap, s.tol)?
        } else {
            certify_ioc_pattern(&ioc, &w, CellSign::NuZero, s.tol)?
        };
        checks.push(check(
            format!("{tag}/m_certificate"),
            m.verdict && m.residuals.equations_max() <= 1e-8,
            json!({"residuals": m.residuals, "flags": m.flags}),
        ));

        for (sign, name) in UNIFORM_PATTERNS {
            let c = certify_ioc_pattern(&ioc, &w, sign, s.tol)?;
            csv.push_str(&format!("{tag},{name},{}\n", c.multipliers.is_some()));
            if sign == CellSign::MuZero && variant == NostrongVariant::Averaging {
                checks.push(check(format!("{tag}/mu_zero_pattern_infeasible"), c.multipliers.is_none(), json!({"flags": c.flags})));
            }
        }

        if variant == NostrongVariant::Averaging {
            let p = mu_zero_adjoint(&ioc)?;
            let expected = 1.0 / (alpha + alpha * alpha);
            let err = p.values().iter().map(|v| (v - expected).abs()).fold(0.0, f64::max);
            checks.push(check(
                format!("{tag}/mu_zero_adjoint_constant"),
                err <= 1e-8 && expected > 1.0,
                json!({"expected": expected, "max_error": err}),
            ));
        }
        if s.all_patterns && n <= s.cap {
            let lin = linearize(&ioc, &pt, &ioc.f_prime(&pt.u)?, &neg_lap, s.tol)?;
            let fam = enumerate_family(&lin, s.cap)?;
            for d in all_patterns(&fam)? {
                let name: Vec<&str> = d
                    .pattern
                    .iter()
                    .map(|c| match c {
                        CellSign::BothNonpositive => "b",
                        CellSign::MuZero => "m",
                        CellSign::NuZero => "n",
                    })
                    .collect();
                csv.push_str(&format!("{tag},{},{}\n", name.concat(), d.feasible));
            }
        }
    }
    battery(checks, json!({"n": n, "alpha": alpha}), csv)
}
