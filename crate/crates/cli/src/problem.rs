//! Problem files: TOML with `[grid]`, `[operator]`, `[mpcc_lin]` or `[ioc]`,
//! `[costs]`. Grid functions are given as a constant, an inline list or the
//! path of a `midpoint,value` CSV relative to the problem file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use mstat_core::ioc::{Cost, IocProblem, Observation, Target};
use mstat_core::mpcc_lin::MpccLinProblem;
use mstat_core::{CellSet, Grid, GridFunction, LinOp};
use nalgebra::DMatrix;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub grid: GridSection,
    pub operator: OperatorSection,
    pub mpcc_lin: Option<MpccLinSection>,
    pub ioc: Option<IocSection>,
    pub costs: CostsSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub interval: [f64; 2],
    /// Uniform grid with this many cells.
    pub cells: Option<usize>,
    /// Nonuniform grid: cell weights and midpoints.
    pub weights: Option<Vec<f64>>,
    pub midpoints: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSection {
    ScaledIdPlusAverage { d1: f64, d2: f64 },
    ScaledIdentity { scale: f64 },
    InvDirichletLaplacian,
    /// Row-major entries.
    Matrix { entries: Vec<f64> },
    /// `Sv = scale·⟨1, v⟩`, only as an observation operator.
    Averaging { scale: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpccLinSection {
    pub omega_0p: Vec<usize>,
    pub omega_00: Vec<usize>,
    /// Defaults to the cells in neither of the other two sets.
    pub omega_p0: Option<Vec<usize>>,
    pub omega_w: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IocSection {
    pub alpha: f64,
    pub y_d: Value,
    pub u_a: Value,
    pub w_a: Value,
    pub zeta: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub f_u: Option<Value>,
    pub f_w: Option<Value>,
    pub f_xi: Option<Value>,
    /// `linear_integral` or `quadratic_tracking`.
    pub f: Option<String>,
    pub f_data: Option<Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Constant(f64),
    List(Vec<f64>),
    Csv(PathBuf),
}

pub enum Problem {
    Lin(MpccLinProblem),
    Ioc(IocProblem),
}

/// Reads files and hashes every byte read, in reading order.
pub struct Inputs {
    hasher: Sha256,
    base: PathBuf,
}

impl Inputs {
    pub fn new(base: &Path) -> Self {
        Inputs {
            hasher: Sha256::new(),
            base: base.to_path_buf(),
        }
    }

    /// Reads and hashes `path` as given, relative to the working directory.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        Ok(bytes)
    }

    /// A CSV named on the command line.
    pub fn grid_function(&mut self, grid: &Arc<Grid>, path: &Path) -> Result<GridFunction, CliError> {
        let bytes = self.read(path)?;
        Ok(GridFunction::read_csv(grid, bytes.as_slice())?)
    }

    /// A CSV named inside the problem file, relative to that file.
    fn referenced_grid_function(&mut self, grid: &Arc<Grid>, path: &Path) -> Result<GridFunction, CliError> {
        let full = if path.is_absolute() { path.to_path_buf() } else { self.base.join(path) };
        self.grid_function(grid, &full)
    }

    pub fn sha256(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Invalid(format!("problem file: {e}")))
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        let [a, b] = self.grid.interval;
        let g = match (&self.grid.cells, &self.grid.weights, &self.grid.midpoints) {
            (Some(n), None, None) => Grid::uniform(a, b, *n)?,
            (None, Some(w), Some(m)) => Grid::from_parts(w.clone(), m.clone(), (a, b))?,
            _ => {
                return Err(CliError::Invalid(
                    "[grid] needs either `cells` or both `weights` and `midpoints`".into(),
                ))
            }
        };
        Ok(g)
    }

    /// Builds the problem, reading referenced CSV files through `inputs`.
    pub fn build(&self, inputs: &mut Inputs) -> Result<Problem, CliError> {
        let g = self.grid()?;
        match (&self.mpcc_lin, &self.ioc) {
            (Some(lin), None) => self.build_lin(&g, lin, inputs).map(Problem::Lin),
            (None, Some(ioc)) => self.build_ioc(&g, ioc, inputs).map(Problem::Ioc),
            _ => Err(CliError::Invalid("exactly one of [mpcc_lin] and [ioc] is required".into())),
        }
    }

    fn operator(&self, g: &Arc<Grid>) -> Result<LinOp, CliError> {
        Ok(match &self.operator {
            OperatorSection::ScaledIdPlusAverage { d1, d2 } => LinOp::ScaledIdPlusAverage { d1: *d1, d2: *d2 },
            OperatorSection::ScaledIdentity { scale } => LinOp::ScaledIdentity(*scale),
            OperatorSection::InvDirichletLaplacian => LinOp::inverse_laplacian(g)?,
            OperatorSection::Matrix { entries } => {
                let n = g.len();
                if entries.len() != n * n {
                    return Err(CliError::Invalid(format!(
                        "matrix operator needs {} entries, got {}",
                        n * n,
                        entries.len()
                    )));
                }
                LinOp::Matrix(DMatrix::from_row_slice(n, n, entries))
            }
            OperatorSection::Averaging { .. } => {
                return Err(CliError::Invalid("`averaging` is an observation operator for [ioc] problems".into()))
            }
        })
    }

    fn build_lin(&self, g: &Arc<Grid>, sec: &MpccLinSection, inputs: &mut Inputs) -> Result<MpccLinProblem, CliError> {
        let a = self.operator(g)?;
        let c = &self.costs;
        if c.f.is_some() || c.f_data.is_some() {
            return Err(CliError::Invalid("`f` and `f_data` belong to [ioc] problems".into()));
        }
        let mut cost = |v: &Option<Value>| match v {
            Some(v) => value(g, v, inputs),
            None => Ok(GridFunction::zeros(g)),
        };
        let (f_u, f_w, f_xi) = (cost(&c.f_u)?, cost(&c.f_w)?, cost(&c.f_xi)?);
        let set = |idx: &[usize]| CellSet::from_indices(g, idx);
        let o0p = set(&sec.omega_0p)?;
        let o00 = set(&sec.omega_00)?;
        let op0 = match &sec.omega_p0 {
            Some(idx) => set(idx)?,
            None => o0p.union(&o00)?.complement(),
        };
        Ok(MpccLinProblem::new(a, f_u, f_w, f_xi, o0p, o00, op0, set(&sec.omega_w)?)?)
    }

    fn build_ioc(&self, g: &Arc<Grid>, sec: &IocSection, inputs: &mut Inputs) -> Result<IocProblem, CliError> {
        let c = &self.costs;
        if c.f_u.is_some() || c.f_w.is_some() || c.f_xi.is_some() {
            return Err(CliError::Invalid("`f_u`, `f_w`, `f_xi` belong to [mpcc_lin] problems".into()));
        }
        let (s, y_d) = match &self.operator {
            OperatorSection::Averaging { scale } => match &sec.y_d {
                Value::Constant(y) => (Observation::Averaging { scale: *scale }, Target::Scalar(*y)),
                _ => return Err(CliError::Invalid("with an averaging observation `y_d` is a number".into())),
            },
            _ => (Observation::Operator(self.operator(g)?), Target::Function(value(g, &sec.y_d, inputs)?)),
        };
        let f_data = match &c.f_data {
            Some(v) => value(g, v, inputs)?,
            None => return Err(CliError::Invalid("[costs] needs `f_data`".into())),
        };
        let f = match c.f.as_deref() {
            Some("linear_integral") => Cost::LinearIntegral(f_data),
            Some("quadratic_tracking") => Cost::QuadraticTracking(f_data),
            other => {
                return Err(CliError::Invalid(format!(
                    "[costs] `f` must be `linear_integral` or `quadratic_tracking`, got {other:?}"
                )))
            }
        };
        Ok(IocProblem::new(
            g.clone(),
            s,
            sec.alpha,
            y_d,
            value(g, &sec.u_a, inputs)?,
            value(g, &sec.w_a, inputs)?,
            value(g, &sec.zeta, inputs)?,
            f,
        )?)
    }
}

fn value(g: &Arc<Grid>, v: &Value, inputs: &mut Inputs) -> Result<GridFunction, CliError> {
    match v {
        Value::Constant(c) => Ok(GridFunction::constant(g, *c)),
        Value::List(xs) => Ok(GridFunction::new(g.clone(), xs.clone())?),
        Value::Csv(p) => inputs.referenced_grid_function(g, p),
    }
}

/// Parses the problem at `path`, hashing it and every CSV it references.
pub fn load(path: &Path) -> Result<(Problem, Inputs), CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut inputs = Inputs::new(base);
    let bytes = inputs.read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Invalid("problem file is not UTF-8".into()))?;
    let file = ProblemFile::parse(&text)?;
    let problem = file.build(&mut inputs)?;
    Ok((problem, inputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIN: &str = r#"
[grid]
interval = [0.0, 1.0]
cells = 4

[operator]
kind = "scaled_id_plus_average"
d1 = 1.0
d2 = 0.5

[mpcc_lin]
omega_0p = [0]
omega_00 = [1, 2]
omega_w = [3]

[costs]
f_u = [0.0, 1.0, 2.0, 3.0]
f_w = 1.0
"#;

    #[test]
    fn linear_problem_with_defaults() {
        let f = ProblemFile::parse(LIN).unwrap();
        let mut inputs = Inputs::new(Path::new("."));
        let Problem::Lin(p) = f.build(&mut inputs).unwrap() else { panic!("expected a linear problem") };
        assert_eq!(p.omega_p0.indices(), vec![3]);
        assert_eq!(p.f_u.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.f_w.values(), &[1.0; 4]);
        assert_eq!(p.f_xi.max_abs(), 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = LIN.replace("cells = 4", "cells = 4\nspacing = 2");
        assert!(matches!(ProblemFile::parse(&bad), Err(CliError::Invalid(_))));
        let bad = LIN.replace("d2 = 0.5", "d2 = 0.5\nd3 = 1.0");
        assert!(ProblemFile::parse(&bad).is_err());
    }

    #[test]
    fn sections_must_not_mix() {
        let mixed = format!("{LIN}\n[ioc]\nalpha = 1.0\ny_d = 0.0\nu_a = 0.0\nw_a = 0.0\nzeta = 0.0\n");
        let f = ProblemFile::parse(&mixed).unwrap();
        assert!(f.build(&mut Inputs::new(Path::new("."))).is_err());
    }

    #[test]
    fn averaging_observation_needs_scalar_target() {
        let text = r#"
[grid]
interval = [0.0, 1.0]
cells = 3
[operator]
kind = "averaging"
scale = 0.5
[ioc]
alpha = 0.5
y_d = [1.0, 2.0, 3.0]
u_a = 0.0
w_a = 0.0
zeta = 1.0
[costs]
f = "linear_integral"
f_data = -1.0
"#;
        let f = ProblemFile::parse(text).unwrap();
        assert!(f.build(&mut Inputs::new(Path::new("."))).is_err());
        let f = ProblemFile::parse(&text.replace("y_d = [1.0, 2.0, 3.0]", "y_d = 0.0")).unwrap();
        assert!(matches!(f.build(&mut Inputs::new(Path::new("."))).unwrap(), Problem::Ioc(_)));
    }
}
