//! Dense two-phase simplex.
//!
//! Problems are stated as `min cᵀx` subject to equality rows and per-variable
//! bounds. Bounds are folded into a standard form `min c̃ᵀy, Ãy = b̃, y ≥ 0`
//! (fixed variables substituted, shifted or mirrored half-bounded variables,
//! split free variables, an extra row for two-sided bounds). The column with
//! the most negative reduced cost enters and ratio ties go to the largest
//! pivot, until a run of degenerate pivots switches both choices to Bland's
//! lowest-index rule. Identical inputs
//! give identical outputs. The tableau is refactorized from the original columns
//! every few pivots and before any conclusion is drawn, and the final basic
//! solution is recomputed from the untouched standard form.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
/// Pivot candidates below this fraction of the largest positive column entry
/// are ignored.
const PIVOT_REL_TOL: f64 = 1e-7;
/// Consecutive degenerate pivots after which ties go to the lowest index,
/// which rules out cycling.
const DEGENERATE_BEFORE_BLAND: usize = 50;
const COST_TOL: f64 = 1e-10;
/// Relative descent a ray must show to be accepted.
const RAY_SLOPE_TOL: f64 = 1e-8;
/// Smallest to largest LU pivot below which a basis counts as singular.
const SINGULAR_RATIO: f64 = 1e-13;
/// Phase-1 optimum above this value means the problem is infeasible.
pub const INFEASIBILITY_TOL: f64 = 1e-9;

/// `min cᵀx` s.t. `Σ_j a_ij x_j = b_i`, `l_j ≤ x_j ≤ u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    pub equality_rows: Vec<(Vec<f64>, f64)>,
    pub var_bounds: Vec<(f64, f64)>,
    pub objective: Vec<f64>,
}

impl LpProblem {
    /// A problem with `n` free variables, no rows and a zero objective.
    pub fn new(n: usize) -> Self {
        LpProblem {
            num_vars: n,
            equality_rows: Vec::new(),
            var_bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            objective: vec![0.0; n],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.equality_rows.push((coeffs, rhs));
    }

    /// Largest absolute violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.equality_rows.iter().map(|(a, b)| {
            (a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - b).abs()
        });
        let bounds = self
            .var_bounds
            .iter()
            .zip(x)
            .map(|(&(l, u), &x)| (l - x).max(x - u).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.var_bounds.len() != n || self.objective.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} bounds and objective coefficients, got {} and {}",
                self.var_bounds.len(),
                self.objective.len()
            )));
        }
        for (i, (a, b)) in self.equality_rows.iter().enumerate() {
            if a.len() != n {
                return Err(Error::InvalidArgument(format!("row {i} has {} coefficients, expected {n}", a.len())));
            }
            if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} has non-finite data")));
            }
        }
        for (j, &(l, u)) in self.var_bounds.iter().enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("objective has non-finite coefficients".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Empty unless optimal.
    pub point: Vec<f64>,
    /// `NaN` unless optimal.
    pub objective_value: f64,
}

impl LpResult {
    fn without_point(status: LpStatus) -> Self {
        LpResult {
            status,
            point: Vec::new(),
            objective_value: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original variable is recovered from standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    /// `x = offset + sign·y[col]`
    Shifted { col: usize, offset: f64, sign: f64 },
    /// `x = y[pos] - y[neg]`
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    maps: Vec<VarMap>,
}

fn to_standard_form(p: &LpProblem) -> StandardForm {
    let mut ncols = 0;
    let mut maps = Vec::with_capacity(p.num_vars);
    let mut two_sided = Vec::new();
    for &(l, u) in &p.var_bounds {
        let m = if l == u {
            VarMap::Fixed(l)
        } else if l.is_finite() {
            if u.is_finite() {
                two_sided.push((ncols, u - l));
            }
            ncols += 1;
            VarMap::Shifted { col: ncols - 1, offset: l, sign: 1.0 }
        } else if u.is_finite() {
            ncols += 1;
            VarMap::Shifted { col: ncols - 1, offset: u, sign: -1.0 }
        } else {
            ncols += 2;
            VarMap::Split { pos: ncols - 2, neg: ncols - 1 }
        };
        maps.push(m);
    }
    let slack_start = ncols;
    ncols += two_sided.len();

    let mut a = Vec::with_capacity(p.equality_rows.len() + two_sided.len());
    let mut b = Vec::with_capacity(a.capacity());
    for (coeffs, rhs) in &p.equality_rows {
        let mut row = vec![0.0; ncols];
        let mut r = *rhs;
        for (j, &aj) in coeffs.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Fixed(v) => r -= aj * v,
                VarMap::Shifted { col, offset, sign } => {
                    r -= aj * offset;
                    row[col] += sign * aj;
                }
                VarMap::Split { pos, neg } => {
                    row[pos] += aj;
                    row[neg] -= aj;
                }
            }
        }
        a.push(row);
        b.push(r);
    }
    for (k, &(col, width)) in two_sided.iter().enumerate() {
        let mut row = vec![0.0; ncols];
        row[col] = 1.0;
        row[slack_start + k] = 1.0;
        a.push(row);
        b.push(width);
    }

    let mut c = vec![0.0; ncols];
    for (j, &cj) in p.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Fixed(_) => {}
            VarMap::Shifted { col, sign, .. } => c[col] += sign * cj,
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }
    StandardForm { a, b, c, maps }
}

/// Fewest pivots between two refactorizations of the tableau from the
/// original columns; larger tableaus refactorize every `rows` pivots.
const REINVERT_EVERY: usize = 100;

/// Dense simplex tableau: `rows` constraint rows of width `width`, the last
/// entry of each row being the right-hand side.
struct Tableau {
    t: Vec<f64>,
    /// The initial tableau, kept for refactorization.
    orig: Vec<f64>,
    rows: usize,
    width: usize,
    basis: Vec<usize>,
    /// Cost of each column in the current phase.
    cost: Vec<f64>,
    /// Reduced costs, last entry holds `-objective`.
    obj: Vec<f64>,
    since_reinvert: usize,
    /// Most-negative pricing; otherwise always the lowest eligible index.
    dantzig: bool,
    /// Whether the last refactorization found a well-conditioned basis;
    /// rays are only trusted then.
    factorized: bool,
}

enum RunOutcome {
    Optimal,
    Ray,
    /// A ray that does not survive a check against the original columns.
    Unreliable,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, j: usize) -> f64 {
        self.t[r * self.width + j]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let piv = self.t[pr * w + pc];
        {
            let row = &mut self.t[pr * w..(pr + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[pc] = 1.0;
        }
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        let nz: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[r * w..(r + 1) * w];
            for &j in &nz {
                row[j] -= f * prow[j];
            }
            row[pc] = 0.0;
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for &j in &nz {
                self.obj[j] -= f * prow[j];
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.since_reinvert += 1;
    }

    /// Reduced costs from scratch for the current tableau.
    fn price(&mut self) {
        let w = self.width;
        let mut obj = self.cost.clone();
        obj.push(0.0);
        for r in 0..self.rows {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                for j in 0..w {
                    obj[j] -= cb * self.t[r * w + j];
                }
            }
        }
        for &b in &self.basis {
            obj[b] = 0.0;
        }
        self.obj = obj;
    }

    /// Recomputes `B⁻¹[A | b]` from the original columns; keeps the current
    /// tableau if the basis matrix is numerically singular.
    fn reinvert(&mut self) {
        let (m, w) = (self.rows, self.width);
        self.since_reinvert = 0;
        if m == 0 {
            return;
        }
        let bmat = DMatrix::from_fn(m, m, |r, c| self.orig[r * w + self.basis[c]]);
        let lu = bmat.lu();
        let diag = lu.u().diagonal().map(f64::abs);
        self.factorized = diag.min() > SINGULAR_RATIO * diag.max();
        if !lu.is_invertible() {
            self.factorized = false;
            return;
        }
        let rhs = DMatrix::from_fn(m, w, |r, j| self.orig[r * w + j]);
        let Some(x) = lu.solve(&rhs) else {
            self.factorized = false;
            return;
        };
        if x.iter().any(|v| !v.is_finite()) {
            self.factorized = false;
            return;
        }
        for r in 0..m {
            for j in 0..w {
                self.t[r * w + j] = x[(r, j)];
            }
            self.t[r * w + self.basis[r]] = 1.0;
        }
        self.price();
    }

    /// Whether raising column `pc` and adjusting the basic variables is a
    /// descent direction of the original system: `Ad ≈ 0`, `cᵀd < 0`, with
    /// basic artificials left at zero.
    fn ray_holds(&self, pc: usize) -> bool {
        if !self.factorized {
            return false;
        }
        let (m, w) = (self.rows, self.width);
        let d: Vec<f64> = (0..m).map(|r| -self.at(r, pc)).collect();
        let structural = w - 1 - m;
        if (0..m).any(|k| self.basis[k] >= structural && d[k].abs() > PIVOT_TOL) {
            return false;
        }
        for r in 0..m {
            let row = &self.orig[r * w..(r + 1) * w];
            let mut sum = row[pc];
            let mut scale = row[pc].abs();
            for k in 0..m {
                let term = row[self.basis[k]] * d[k];
                sum += term;
                scale += term.abs();
            }
            if sum.abs() > 1e-9 * (1.0 + scale) {
                return false;
            }
        }
        let terms = (0..m).map(|k| self.cost[self.basis[k]] * d[k]);
        let slope = self.cost[pc] + terms.clone().sum::<f64>();
        let scale = self.cost[pc].abs() + terms.map(f64::abs).sum::<f64>();
        slope < -RAY_SLOPE_TOL * (1.0 + scale)
    }

    /// Leaving row for entering column `pc` among entries above `tol`.
    /// Rows whose ratio ties the minimum are decided by the largest pivot,
    /// or by the lowest basic index when `bland` is set.
    fn ratio_test(&self, pc: usize, tol: f64, bland: bool) -> Option<usize> {
        let cands: Vec<(usize, f64, f64)> = (0..self.rows)
            .filter_map(|r| {
                let a = self.at(r, pc);
                (a > tol).then(|| (r, self.rhs(r).max(0.0) / a, a))
            })
            .collect();
        let min = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let ties = cands.into_iter().filter(|c| c.1 <= min + 1e-12 * (1.0 + min));
        if bland {
            ties.min_by_key(|c| self.basis[c.0]).map(|c| c.0)
        } else {
            ties.max_by(|x, y| x.2.total_cmp(&y.2).then(self.basis[y.0].cmp(&self.basis[x.0])))
                .map(|c| c.0)
        }
    }

    /// Most negative reduced cost enters, Bland's rule after a run of
    /// degenerate pivots; `eligible` filters entering columns. Conclusions are
    /// only drawn on a freshly refactorized tableau. With `skip_rayless`
    /// set, columns without a positive pivot are passed over (phase 1, where
    /// such a column can only come from rounding in the cost row).
    fn run(&mut self, eligible: impl Fn(usize) -> bool, skip_rayless: bool) -> RunOutcome {
        let mut start = 0;
        let mut degenerate = 0;
        loop {
            if self.since_reinvert >= REINVERT_EVERY.max(self.rows) {
                self.reinvert();
                start = 0;
            }
            let bland = degenerate >= DEGENERATE_BEFORE_BLAND;
            let mut candidates = (start..self.width - 1).filter(|&j| eligible(j) && self.obj[j] < -COST_TOL);
            let entering = if bland || !self.dantzig {
                candidates.next()
            } else {
                candidates.min_by(|&x, &y| self.obj[x].total_cmp(&self.obj[y]).then(x.cmp(&y)))
            };
            let Some(pc) = entering else {
                if self.since_reinvert > 0 {
                    self.reinvert();
                    start = 0;
                    continue;
                }
                return RunOutcome::Optimal;
            };
            let colmax = (0..self.rows).map(|r| self.at(r, pc)).fold(0.0, f64::max);
            let best = self.ratio_test(pc, PIVOT_TOL.max(PIVOT_REL_TOL * colmax), bland);
            match best {
                Some(pr) => {
                    if self.rhs(pr) <= 0.0 {
                        degenerate += 1;
                    } else {
                        degenerate = 0;
                    }
                    self.pivot(pr, pc);
                    start = 0;
                }
                None if self.since_reinvert > 0 => {
                    self.reinvert();
                    start = 0;
                }
                None if skip_rayless => start = pc + 1,
                None if !self.dantzig || self.ray_holds(pc) => return RunOutcome::Ray,
                None => return RunOutcome::Unreliable,
            }
        }
    }
}

/// Solves the problem; `Infeasible` and `Unbounded` are regular outcomes.
pub fn lp_solve(p: &LpProblem) -> Result<LpResult> {
    p.validate()?;
    let sf = to_standard_form(p);
    if let Some(r) = simplex(p, &sf, true) {
        return Ok(r);
    }
    log::debug!("most-negative pricing gave an unreliable conclusion; re-solving by lowest index");
    Ok(simplex(p, &sf, false).expect("lowest-index pricing always concludes"))
}

/// Both phases. `None` when a most-negative run ends on a ray or a point
/// that the original data do not confirm.
fn simplex(p: &LpProblem, sf: &StandardForm, dantzig: bool) -> Option<LpResult> {
    let m = sf.a.len();
    let n = sf.c.len();

    // Phase 1 with one artificial per row.
    let width = n + m + 1;
    let mut t = vec![0.0; m * width];
    for r in 0..m {
        let sign = if sf.b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r * width + j] = sign * sf.a[r][j];
        }
        t[r * width + n + r] = 1.0;
        t[r * width + width - 1] = sign * sf.b[r];
    }
    let mut cost = vec![0.0; width - 1];
    cost[n..].iter_mut().for_each(|c| *c = 1.0);
    let mut tab = Tableau {
        orig: t.clone(),
        t,
        rows: m,
        width,
        basis: (n..n + m).collect(),
        cost,
        obj: Vec::new(),
        since_reinvert: 0,
        dantzig,
        factorized: true,
    };
    tab.price();
    // Artificial columns are never eligible to enter.
    tab.run(|j| j < n, true);
    let phase1: f64 = (0..tab.rows).filter(|&r| tab.basis[r] >= n).map(|r| tab.rhs(r).max(0.0)).sum();
    if phase1 > INFEASIBILITY_TOL {
        log::debug!("lp infeasible, phase-1 optimum {phase1:e}");
        return Some(LpResult::without_point(LpStatus::Infeasible));
    }

    // Drive remaining artificials out of the basis where possible; rows
    // without a structural entry are redundant and keep their artificial at
    // level zero.
    for r in 0..tab.rows {
        if tab.basis[r] >= n {
            let best = (0..n).map(|j| (j, tab.at(r, j).abs())).max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
            if let Some((j, _)) = best.filter(|b| b.1 > 1e-9) {
                tab.pivot(r, j);
            }
        }
    }

    // Phase 2.
    let mut cost = sf.c.clone();
    cost.resize(width - 1, 0.0);
    tab.cost = cost;
    tab.reinvert();
    tab.price();
    match tab.run(|j| j < n, false) {
        RunOutcome::Ray => return Some(LpResult::without_point(LpStatus::Unbounded)),
        RunOutcome::Unreliable => return None,
        RunOutcome::Optimal => {}
    }

    let mut y = vec![0.0; n];
    for r in 0..tab.rows {
        if tab.basis[r] < n {
            y[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let structural: Vec<usize> = tab.basis.iter().copied().filter(|&j| j < n).collect();
    refine_basic_solution(sf, &structural, &mut y);

    let x: Vec<f64> = sf
        .maps
        .iter()
        .map(|m| match *m {
            VarMap::Fixed(v) => v,
            VarMap::Shifted { col, offset, sign } => offset + sign * y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective_value = p.objective.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>();
    let viol = p.max_violation(&x);
    if viol > 1e-9 {
        if dantzig {
            return None;
        }
        log::warn!("lp solution violates constraints by {viol:e}");
    }
    Some(LpResult {
        status: LpStatus::Optimal,
        point: x,
        objective_value,
    })
}

/// Recomputes `y_B = B⁻¹ b` from the original columns; keeps the tableau
/// values when the basis is numerically singular or refinement would make
/// things worse.
fn refine_basic_solution(sf: &StandardForm, basis: &[usize], y: &mut [f64]) {
    let m = sf.a.len();
    let k = basis.len();
    if k == 0 {
        return;
    }
    // Least-squares in the (possibly over-determined) original rows.
    let bmat = DMatrix::from_fn(m, k, |r, c| sf.a[r][basis[c]]);
    let rhs = DVector::from_column_slice(&sf.b);
    let residual = |y: &[f64]| -> f64 {
        (0..m)
            .map(|r| (sf.a[r].iter().zip(y).map(|(a, y)| a * y).sum::<f64>() - sf.b[r]).abs())
            .fold(0.0, f64::max)
    };
    let before = residual(y);
    if before <= 1e-13 {
        return;
    }
    let normal = bmat.tr_mul(&bmat);
    let Some(chol) = normal.cholesky() else { return };
    let sol = chol.solve(&bmat.tr_mul(&rhs));
    let mut candidate = y.to_vec();
    for (c, &j) in basis.iter().enumerate() {
        candidate[j] = sol[c].max(0.0);
    }
    if residual(&candidate) < before {
        y.copy_from_slice(&candidate);
    }
}
