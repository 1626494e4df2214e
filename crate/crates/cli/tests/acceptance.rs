//! Acceptance battery. Prints one `[PASS]`/`[FAIL]` line per criterion and a
//! summary; always exits 0 so known-red criteria stay visible without
//! breaking the workspace test run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mstat_core::ioc::{
    build_kktr_point, certify_ioc, certify_ioc_kind, certify_ioc_pattern, ex48_row, kktr_m_residuals, kktr_to_lin,
    linearize, scenario_nostrong, scenario_random, Cost, IocProblem, NostrongVariant, Observation, Target,
};
use mstat_core::lower_level::{directional_derivative, solve_oc};
use mstat_core::lp::LpStatus;
use mstat_core::mpcc_lin::{
    solve_kkt_beta, solve_kkt_beta_with_objective, solve_lp_beta, CellSign, KktMultipliers, MpccLinProblem,
    SignSystem,
};
use mstat_core::normalize::{normalize_dispatch, normalize_nonneg_case, verify_l1_bound};
use mstat_core::operators::{alpha_plus, assemble_dense};
use mstat_core::regularization::{adjoint_solve, run_reg_path, solve_regularized, t_gamma_derivative, Schedule};
use mstat_core::stationarity::{check_m, check_m_condition, check_weak, kkt_residuals, CertificateKind};
use mstat_core::synthesis::{all_patterns, enumerate_family, synthesize};
use mstat_core::{CellSet, Grid, GridFunction, LinOp};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

fn rand_gf(g: &Arc<Grid>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> GridFunction {
    GridFunction::new(g.clone(), (0..g.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn nonneg_operator(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> LinOp {
    let n = g.len();
    match rng.gen_range(0..4) {
        0 => LinOp::ScaledIdPlusAverage { d1: rng.gen_range(0.5..2.0), d2: rng.gen_range(0.0..1.0) },
        1 => LinOp::Matrix(DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..0.3))),
        2 => LinOp::Sum(vec![LinOp::identity(), LinOp::inverse_laplacian(g).unwrap()]),
        _ => alpha_plus(rng.gen_range(0.1..1.0), LinOp::GramComposition(Box::new(LinOp::inverse_laplacian(g).unwrap()))),
    }
}

struct Planted {
    prob: MpccLinProblem,
    beta: CellSet,
}

/// `part[i]`: 0 for Ω⁰⁺, 1 for Ω⁰⁰, 2 for Ω⁺⁰. Costs are generated from
/// multipliers obeying the A_β sign rules; with `strong` they are
/// nonpositive on the whole biactive set, so every A_β system is feasible.
fn planted_with(rng: &mut ChaCha8Rng, part: &[u8], a: LinOp, strong: bool) -> Planted {
    let n = part.len();
    let g = Grid::uniform(0.0, 1.0, n).unwrap();
    let mask = |k: u8| CellSet::new(g.clone(), part.iter().map(|&c| c == k).collect()).unwrap();
    let (o0p, o00, op0) = (mask(0), mask(1), mask(2));
    let omega_w = CellSet::new(g.clone(), (0..n).map(|_| rng.gen_bool(0.5)).collect()).unwrap();
    let beta = CellSet::new(g.clone(), (0..n).map(|i| o00.contains(i) && rng.gen_bool(0.5)).collect()).unwrap();
    let p = rand_gf(&g, rng, -1.0, 1.0);
    let mut lam = vec![0.0; n];
    let mut mu = vec![0.0; n];
    let mut nu = vec![0.0; n];
    for i in 0..n {
        if omega_w.contains(i) {
            lam[i] = rng.gen_range(-1.0..0.0);
        }
        let bi = o00.contains(i);
        if !op0.contains(i) {
            mu[i] = if bi && (strong || !beta.contains(i)) { rng.gen_range(-1.0..0.0) } else { rng.gen_range(-1.0..1.0) };
        }
        if !o0p.contains(i) {
            nu[i] = if bi && (strong || beta.contains(i)) { rng.gen_range(-1.0..0.0) } else { rng.gen_range(-1.0..1.0) };
        }
    }
    let gf = |v: Vec<f64>| GridFunction::new(g.clone(), v).unwrap();
    let (mu, nu, lam) = (gf(mu), gf(nu), gf(lam));
    let f_u = a.apply_adjoint(&p).unwrap().add(&mu).unwrap().scale(-1.0);
    let f_w = p.sub(&lam).unwrap();
    let f_xi = p.sub(&nu).unwrap();
    let prob = MpccLinProblem::new(a, f_u, f_w, f_xi, o0p, o00, op0, omega_w).unwrap();
    Planted { prob, beta }
}

fn random_part(rng: &mut ChaCha8Rng, n: usize, with_p0: bool) -> Vec<u8> {
    let mut part: Vec<u8> = (0..n).map(|_| rng.gen_range(0..if with_p0 { 3 } else { 2 })).collect();
    if with_p0 && !part.contains(&2) {
        part[rng.gen_range(0..n)] = 2;
    }
    part
}

/// `A*s + s` with `s = |F_u| + |F_w| + |F_ξ|`, computed from the data.
fn c0_of(prob: &MpccLinProblem) -> GridFunction {
    let s = prob.f_u.abs().add(&prob.f_w.abs()).unwrap().add(&prob.f_xi.abs()).unwrap();
    prob.a_op.apply_adjoint(&s).unwrap().add(&s).unwrap()
}

fn bound_excess(m: &KktMultipliers, c: f64, c0: &GridFunction) -> f64 {
    (0..c0.len())
        .map(|i| {
            let v = [m.p.values()[i], m.mu.values()[i], m.nu.values()[i], m.lam.values()[i]]
                .iter()
                .fold(0.0f64, |a, x| a.max(x.abs()));
            v - c * c0.values()[i]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn ac1() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for v in [NostrongVariant::NonnegMatrix, NostrongVariant::Averaging] {
        let t = Instant::now();
        let ioc = scenario_nostrong(64, 0.25, v).unwrap();
        let w = GridFunction::zeros(&ioc.grid);
        let c = certify_ioc_kind(&ioc, &w, CertificateKind::S, 12, 1e-9).unwrap();
        let dt = t.elapsed();
        let refuted = !c.verdict && c.multipliers.is_none();
        ok &= refuted && dt < Duration::from_secs(5);
        notes.push(format!("{v:?}: refuted={refuted} {:.2}s", dt.as_secs_f64()));
    }
    (ok, notes.join(", "))
}

fn ac2() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for v in [NostrongVariant::NonnegMatrix, NostrongVariant::Averaging] {
        let ioc = scenario_nostrong(16, 0.25, v).unwrap();
        let g = &ioc.grid;
        let w = GridFunction::zeros(g);
        let m = KktMultipliers {
            p: GridFunction::zeros(g),
            nu: GridFunction::zeros(g),
            mu: GridFunction::constant(g, 1.0),
            lam: GridFunction::constant(g, -1.0),
        };
        let pt = build_kktr_point(&ioc, &w).unwrap();
        let neg_lap = ioc.neg_laplacian(&pt.w).unwrap();
        let r = kktr_m_residuals(&ioc, &pt, &m, &neg_lap, 1e-9).unwrap();
        let lin = linearize(&ioc, &pt, &ioc.f_prime(&pt.u).unwrap(), &neg_lap, 1e-9).unwrap();
        let lm = kktr_to_lin(&ioc, &m);
        let weak = check_weak(&lin, &lm, 1e-10).unwrap();
        let mcond = check_m_condition(&lm.mu, &lm.nu, &lin.omega_00, 1e-10);
        let explicit = r.max() <= 1e-10 && weak.verdict && weak.residuals.max() <= 1e-10 && mcond;
        ok &= explicit;
        notes.push(format!("{v:?}: explicit {explicit} ({:.1e})", r.max().max(weak.residuals.max())));

        let t = Instant::now();
        let small = scenario_nostrong(10, 0.25, v).unwrap();
        let c = certify_ioc(&small, &GridFunction::zeros(&small.grid), 10, 1e-9).unwrap();
        let dt = t.elapsed();
        let fam_ok = c.verdict && c.residuals.equations_max() <= 1e-8 && dt < Duration::from_secs(60);
        ok &= fam_ok;
        notes.push(format!("family n=10 {fam_ok} {:.2}s", dt.as_secs_f64()));
        for n in [16, 64] {
            let ioc = scenario_nostrong(n, 0.25, v).unwrap();
            let c = certify_ioc_pattern(&ioc, &GridFunction::zeros(&ioc.grid), CellSign::NuZero, 1e-9).unwrap();
            let good = c.verdict && c.residuals.equations_max() <= 1e-8;
            ok &= good;
            notes.push(format!("n={n} {good} ({:.1e})", c.residuals.equations_max()));
        }
    }
    (ok, notes.join(", "))
}

fn ac3() -> Verdict {
    let alpha = 0.1;
    let ioc = scenario_nostrong(64, alpha, NostrongVariant::Averaging).unwrap();
    let w = GridFunction::zeros(&ioc.grid);
    let c = certify_ioc_pattern(&ioc, &w, CellSign::MuZero, 1e-9).unwrap();
    let infeasible = c.multipliers.is_none();
    let u = solve_oc(&ioc, &w).unwrap().u;
    let a = assemble_dense(&ioc.hessian(), &ioc.grid).unwrap();
    let rhs = DVector::from_vec(ioc.f_prime(&u).unwrap().scale(-1.0).into_values());
    let p = a.lu().solve(&rhs).unwrap();
    let expected = 1.0 / (alpha + alpha * alpha);
    let err = p.iter().map(|v| (v - expected).abs()).fold(0.0, f64::max);
    let constant = err <= 1e-8 && expected > 1.0;
    (
        infeasible && constant,
        format!("mu_zero pattern infeasible={infeasible} (flags {:?}); p = {expected:.9} to {err:.1e}", c.flags),
    )
}

fn ac4() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_res, mut worst_bound, mut missing) = (0.0f64, f64::NEG_INFINITY, 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..=32);
        let g = Grid::uniform(0.0, 1.0, n).unwrap();
        let a = nonneg_operator(&g, &mut rng);
        let part = random_part(&mut rng, n, false);
        let pl = planted_with(&mut rng, &part, a, false);
        let Some(m0) = solve_kkt_beta(&pl.prob, &pl.beta).unwrap().found() else {
            missing += 1;
            continue;
        };
        let out = normalize_nonneg_case(&pl.prob, &pl.beta, &m0).unwrap();
        let r = kkt_residuals(&pl.prob, &out.mult, SignSystem::Beta(&pl.beta)).unwrap();
        worst_res = worst_res.max(r.max());
        worst_bound = worst_bound.max(bound_excess(&out.mult, 2.0, &c0_of(&pl.prob)));
    }
    let dt = t.elapsed();
    (
        missing == 0 && worst_res <= 1e-8 && worst_bound <= 1e-9 && dt < Duration::from_secs(30),
        format!("residual {worst_res:.1e}, excess over 2c0 {worst_bound:.1e}, unsolved {missing}, {:.2}s", dt.as_secs_f64()),
    )
}

/// Case constants for `A = I + ⟨1,·⟩`.
fn c_beta(prob: &MpccLinProblem, beta: &CellSet) -> f64 {
    let mp0 = prob.omega_p0.measure();
    let ms = prob.omega_w.intersection(beta).unwrap().measure();
    let total = prob.grid().total_measure();
    if mp0 == 0.0 {
        2.0
    } else if ms == 0.0 {
        5.0 + 2.0 * total
    } else {
        1.0 + (2.0 + (2.0 + 1.0 / mp0) / ms) * (2.0 + total)
    }
}

fn ac5() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut sampled, mut l1_fail, mut worst, mut errors) = (0, 0, f64::NEG_INFINITY, 0);
    for _ in 0..200 {
        let n = rng.gen_range(2..=16);
        let part = random_part(&mut rng, n, true);
        let pl = planted_with(&mut rng, &part, LinOp::ScaledIdPlusAverage { d1: 1.0, d2: 1.0 }, false);
        let c0 = c0_of(&pl.prob);
        let cb = c_beta(&pl.prob, &pl.beta);
        for k in 0..3 {
            let obj: Vec<f64> = (0..4 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let Some(m) = solve_kkt_beta_with_objective(&pl.prob, &pl.beta, &obj, 1e4).unwrap().found() else {
                continue;
            };
            sampled += 1;
            if !verify_l1_bound(&pl.prob, &m).unwrap() {
                l1_fail += 1;
            }
            if k == 0 {
                match normalize_dispatch(&pl.prob, &pl.beta, &m) {
                    Ok(out) => worst = worst.max(bound_excess(&out.mult, cb, &c0)),
                    Err(_) => errors += 1,
                }
            }
        }
    }
    let dt = t.elapsed();
    (
        sampled > 0 && l1_fail == 0 && errors == 0 && worst <= 1e-9 && dt < Duration::from_secs(60),
        format!(
            "{sampled} sampled, l1 failures {l1_fail}, normalization errors {errors}, excess over C_beta c0 {worst:.1e}, {:.2}s",
            dt.as_secs_f64()
        ),
    )
}

fn ac6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut mismatches, mut found) = (0, 0);
    for k in 0..100 {
        let n = rng.gen_range(1..=6);
        let g = Grid::uniform(0.0, 1.0, n).unwrap();
        let a = nonneg_operator(&g, &mut rng);
        let with_p0 = rng.gen_bool(0.5);
        let part = random_part(&mut rng, n, with_p0);
        let mut pl = planted_with(&mut rng, &part, a, false);
        if k % 2 == 1 {
            pl.prob.f_u = rand_gf(&g, &mut rng, -1.0, 1.0);
            pl.prob.f_w = rand_gf(&g, &mut rng, -1.0, 1.0);
        }
        let lp = solve_lp_beta(&pl.prob, &pl.beta).unwrap();
        let zero = lp.status == LpStatus::Optimal && lp.objective_value.abs() <= 1e-9;
        let kkt = solve_kkt_beta(&pl.prob, &pl.beta).unwrap().found().is_some();
        found += kkt as usize;
        mismatches += (zero != kkt) as usize;
    }
    (mismatches == 0, format!("{mismatches} mismatches, {found}/100 with multipliers"))
}

fn ac7() -> Verdict {
    let t = Instant::now();
    let rows: Vec<_> = [64, 128, 256, 512].iter().map(|&n| ex48_row(n, 3).unwrap()).collect();
    let dt = t.elapsed();
    let a = rows.iter().all(|r| r.lp_status == LpStatus::Optimal && r.lp_value.is_some_and(|v| v.abs() <= 1e-8));
    let orders: Vec<f64> = rows.windows(2).map(|w| (w[0].tuple_residual / w[1].tuple_residual).log2()).collect();
    let b = orders.iter().all(|&o| o >= 0.9);
    let seq: Vec<Option<f64>> = rows.iter().map(|r| r.min_l1_p).collect();
    let c = seq.windows(2).all(|w| matches!((w[0], w[1]), (Some(x), Some(y)) if y > x));
    let fmt = |v: &Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.4}"));
    (
        a && b && c && dt < Duration::from_secs(600),
        format!(
            "(a) {a} lp {:?}; (b) {b} residuals {:?} orders {:.2?}; (c) {c} min_l1 [{}]; {:.1}s",
            rows.iter().map(|r| r.lp_status).collect::<Vec<_>>(),
            rows.iter().map(|r| format!("{:.2e}", r.tuple_residual)).collect::<Vec<_>>(),
            orders,
            seq.iter().map(fmt).collect::<Vec<_>>().join(", "),
            dt.as_secs_f64()
        ),
    )
}

fn ac8() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fd_worst = 0.0f64;
    for seed in 0..50 {
        let ioc = scenario_random(16, 800 + seed).unwrap();
        let w = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let h = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let gamma = if seed % 2 == 0 { 1.0 } else { 10.0 };
        let u = solve_regularized(&ioc, &w, gamma).unwrap();
        let v = t_gamma_derivative(&ioc, &u, gamma, &h).unwrap();
        let step = 1e-6;
        let up = solve_regularized(&ioc, &w.add(&h.scale(step)).unwrap(), gamma).unwrap();
        let dn = solve_regularized(&ioc, &w.sub(&h.scale(step)).unwrap(), gamma).unwrap();
        let fd = up.sub(&dn).unwrap().scale(0.5 / step);
        fd_worst = fd_worst.max(fd.sub(&v).unwrap().norm() / (1.0 + v.norm()));
    }
    let a = fd_worst <= 1e-5;

    let mut path_fail = 0;
    let mut path_worst = 0.0f64;
    for seed in 0..50 {
        let ioc = scenario_random(16, 850 + seed).unwrap();
        let w = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let r = run_reg_path(&ioc, &w, Schedule { gamma0: 1.0, factor: 10.0, steps: 8 }).unwrap();
        let e = *r.errors_to_vi.last().unwrap();
        path_worst = path_worst.max(e);
        path_fail += (e > 1e-4) as usize;
    }
    let b = path_fail == 0;

    let mut dual_worst = 0.0f64;
    for k in 0..100 {
        let ioc = scenario_random(12, 900 + k).unwrap();
        let w = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let h = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let gamma = 10f64.powf(rng.gen_range(0.0..4.0));
        let u = solve_regularized(&ioc, &w, gamma).unwrap();
        let v = t_gamma_derivative(&ioc, &u, gamma, &h).unwrap();
        let p = adjoint_solve(&ioc, &u, gamma).unwrap();
        let lhs = ioc.f_prime(&u).unwrap().inner(&v).unwrap();
        dual_worst = dual_worst.max((lhs + p.inner(&h).unwrap()).abs() / (1.0 + lhs.abs()));
    }
    let c = dual_worst <= 1e-9;
    let dt = t.elapsed();
    (
        a && b && c && dt < Duration::from_secs(120),
        format!(
            "(a) {a} fd {fd_worst:.1e}; (b) {b} {path_fail}/50 above 1e-4 at gamma 1e8, worst {path_worst:.1e}; (c) {c} duality {dual_worst:.1e}; {:.1}s",
            dt.as_secs_f64()
        ),
    )
}

fn ac9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // exact complementarity of the active-set solution
    let (mut compl_ok, mut vi_worst) = (true, 0.0f64);
    for seed in 0..50 {
        let ioc = scenario_random(24, 900 + seed).unwrap();
        let w = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let sol = solve_oc(&ioc, &w).unwrap();
        vi_worst = vi_worst.max(sol.vi_residual);
        let q = w.scale(ioc.alpha).add(&ioc.s_adj_yd().unwrap()).unwrap();
        let grad = ioc.hessian().apply(&sol.u).unwrap().sub(&q).unwrap();
        let scale = 1.0 + q.max_abs();
        for i in 0..ioc.grid.len() {
            let (u, ua, gi) = (sol.u.values()[i], ioc.u_a.values()[i], grad.values()[i]);
            compl_ok &= u >= ua && gi >= -1e-10 * scale && (u == ua || gi.abs() <= 1e-10 * scale);
        }
    }
    // S = 0
    let mut proj_exact = true;
    for _ in 0..20 {
        let g = Grid::uniform(0.0, 1.0, 20).unwrap();
        let ioc = IocProblem::new(
            g.clone(),
            Observation::Averaging { scale: 0.0 },
            rng.gen_range(0.1..1.0),
            Target::Scalar(0.0),
            rand_gf(&g, &mut rng, -1.0, 1.0),
            GridFunction::constant(&g, -1e3),
            GridFunction::zeros(&g),
            Cost::QuadraticTracking(GridFunction::zeros(&g)),
        )
        .unwrap();
        let w = rand_gf(&g, &mut rng, -1.0, 1.0);
        let u = solve_oc(&ioc, &w).unwrap().u;
        proj_exact &= u.values().iter().zip(ioc.u_a.values().iter().zip(w.values())).all(|(u, (a, w))| *u == a.max(*w));
    }
    // Lipschitz bound and difference quotients of T'
    let mut lip_worst = 0.0f64;
    let mut fd_worst = 0.0f64;
    let mut biactive_seen = 0;
    for k in 0..100 {
        let (ioc, w) = if k % 2 == 0 {
            let v = if k % 4 == 0 { NostrongVariant::Averaging } else { NostrongVariant::NonnegMatrix };
            let ioc = scenario_nostrong(16, rng.gen_range(0.1..1.0), v).unwrap();
            let w = GridFunction::zeros(&ioc.grid);
            (ioc, w)
        } else {
            let ioc = scenario_random(16, 1000 + k).unwrap();
            let w = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
            (ioc, w)
        };
        let sol = solve_oc(&ioc, &w).unwrap();
        biactive_seen += !sol.active_sets.biactive.is_empty() as usize;
        let h1 = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let h2 = rand_gf(&ioc.grid, &mut rng, -1.0, 1.0);
        let z1 = directional_derivative(&ioc, &sol, &h1).unwrap();
        let z2 = directional_derivative(&ioc, &sol, &h2).unwrap();
        lip_worst = lip_worst.max(z1.sub(&z2).unwrap().norm() / h1.sub(&h2).unwrap().norm());
        let mut last = f64::NAN;
        for t in [1e-2, 1e-3, 1e-4] {
            let ut = solve_oc(&ioc, &w.add(&h1.scale(t)).unwrap()).unwrap().u;
            let q = ut.sub(&sol.u).unwrap().scale(1.0 / t);
            last = q.sub(&z1).unwrap().norm() / (1.0 + z1.norm());
        }
        fd_worst = fd_worst.max(last);
    }
    let lip = lip_worst <= 1.0 + 1e-10;
    (
        compl_ok && vi_worst <= 1e-10 && proj_exact && lip && fd_worst <= 1e-3,
        format!(
            "complementarity {compl_ok}, vi {vi_worst:.1e}, projection exact {proj_exact}, Lipschitz ratio {lip_worst:.6}, fd {fd_worst:.1e}, {biactive_seen}/100 with biactive cells"
        ),
    )
}

/// Smallest pattern violation over the weight simplex sampled with `steps`
/// subdivisions, per pattern in lexicographic order.
fn brute_force(mu: &[Vec<f64>], nu: &[Vec<f64>], steps: usize, patterns: &[Vec<CellSign>]) -> Vec<f64> {
    let m = mu[0].len();
    let mut best = vec![f64::INFINITY; patterns.len()];
    let mut acc_mu = vec![0.0; m];
    let mut acc_nu = vec![0.0; m];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        j: usize,
        left: usize,
        steps: usize,
        mu: &[Vec<f64>],
        nu: &[Vec<f64>],
        acc_mu: &mut [f64],
        acc_nu: &mut [f64],
        patterns: &[Vec<CellSign>],
        best: &mut [f64],
    ) {
        let k = mu.len();
        let take: Vec<usize> = if j + 1 == k { vec![left] } else { (0..=left).collect() };
        for c in take {
            let wgt = c as f64 / steps as f64;
            for i in 0..acc_mu.len() {
                acc_mu[i] += wgt * mu[j][i];
                acc_nu[i] += wgt * nu[j][i];
            }
            if j + 1 == k {
                for (pi, pat) in patterns.iter().enumerate() {
                    let v = pat
                        .iter()
                        .enumerate()
                        .map(|(i, s)| match s {
                            CellSign::BothNonpositive => acc_mu[i].max(acc_nu[i]).max(0.0),
                            CellSign::MuZero => acc_mu[i].abs(),
                            CellSign::NuZero => acc_nu[i].abs(),
                        })
                        .fold(0.0, f64::max);
                    best[pi] = best[pi].min(v);
                }
            } else {
                rec(j + 1, left - c, steps, mu, nu, acc_mu, acc_nu, patterns, best);
            }
            for i in 0..acc_mu.len() {
                acc_mu[i] -= wgt * mu[j][i];
                acc_nu[i] -= wgt * nu[j][i];
            }
        }
    }
    rec(0, steps, steps, mu, nu, &mut acc_mu, &mut acc_nu, patterns, &mut best);
    best
}

fn ac10() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut disagreements, mut synth_fail, mut compared, mut feasible_seen, mut infeasible_seen) = (0, 0, 0, 0, 0);
    let mut problems = 0;
    while problems < 50 {
        let n = rng.gen_range(1..=6);
        let with_p0 = rng.gen_bool(0.5);
        let part = random_part(&mut rng, n, with_p0);
        let m = part.iter().filter(|&&c| c == 1).count();
        if m == 0 || m > 3 {
            continue;
        }
        let g = Grid::uniform(0.0, 1.0, n).unwrap();
        let a = nonneg_operator(&g, &mut rng);
        let pl = planted_with(&mut rng, &part, a, true);
        let Ok(fam) = enumerate_family(&pl.prob, 3) else { continue };
        problems += 1;
        let cells = &fam.biactive_cells;
        let mu: Vec<Vec<f64>> = fam.members.iter().map(|f| cells.iter().map(|&i| f.mult.mu.values()[i]).collect()).collect();
        let nu: Vec<Vec<f64>> = fam.members.iter().map(|f| cells.iter().map(|&i| f.mult.nu.values()[i]).collect()).collect();
        let steps = if m <= 2 { 200 } else { 20 };
        let max_entry = mu.iter().chain(nu.iter()).flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        let delta = fam.members.len() as f64 * max_entry / steps as f64;
        let table = all_patterns(&fam).unwrap();
        let patterns: Vec<Vec<CellSign>> = table.iter().map(|d| d.pattern.clone()).collect();
        let best = brute_force(&mu, &nu, steps, &patterns);
        let mut any = false;
        for (d, b) in table.iter().zip(&best) {
            compared += 1;
            if d.feasible {
                feasible_seen += 1;
                any = true;
                disagreements += (*b > delta + 1e-12) as usize;
            } else {
                infeasible_seen += 1;
                disagreements += (*b <= 1e-9) as usize;
            }
        }
        if any {
            let ok = synthesize(&fam, 1e-9).ok().map(|s| check_m(&pl.prob, &s.mult, 1e-8).unwrap().verdict);
            synth_fail += (ok != Some(true)) as usize;
        }
    }
    let dt = t.elapsed();
    (
        disagreements == 0 && synth_fail == 0,
        format!(
            "{compared} patterns on 50 problems ({} feasible, {} infeasible), {disagreements} disagreements, {synth_fail} synthesis failures, {:.1}s",
            feasible_seen,
            infeasible_seen,
            dt.as_secs_f64()
        ),
    )
}

fn ac11() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_mstat");
    let runs: &[&[&str]] = &[
        &["--no-timestamp", "scenario", "nostrong", "--n", "8", "--all-patterns"],
        &["--no-timestamp", "scenario", "ex48", "--n", "64"],
    ];
    let mut ok = true;
    for args in runs {
        let a = Command::new(bin).args(*args).output().unwrap();
        let b = Command::new(bin).args(*args).output().unwrap();
        ok &= a.stdout == b.stdout && a.status == b.status && !a.stdout.is_empty();
    }
    (ok, format!("{} commands run twice, reports byte-identical: {ok}", runs.len()))
}

fn main() {
    // libtest flags such as --nocapture are ignored
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("AC1 strong stationarity refuted at the no-strong point", ac1),
        ("AC2 M-multipliers at the no-strong point", ac2),
        ("AC3 mu-zero pattern infeasible, adjoint constant 1/(a+a^2)", ac3),
        ("AC4 nonnegative-operator normalization", ac4),
        ("AC5 averaging-operator bounds", ac5),
        ("AC6 LP value zero iff A_beta multipliers exist", ac6),
        ("AC7 dyadic-band battery", ac7),
        ("AC8 regularization suite", ac8),
        ("AC9 lower-level suite", ac9),
        ("AC10 pattern LP against simplex search", ac10),
        ("AC11 byte-identical reports", ac11),
    ];
    let mut passed = 0;
    for (name, f) in criteria {
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        passed += ok as usize;
        println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
}
