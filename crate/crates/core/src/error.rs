use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failure: {reason}")]
    SolverFailure {
        reason: String,
        /// Residual history or last active set, depending on the solver.
        trace: Vec<f64>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("no family member combination lies in the sign cone for the given set")]
    NoMemberInAalpha,

    #[error("biactive set has {m} cells, cap is {cap}")]
    ProblemTooLarge { m: usize, cap: usize },

    #[error("KKT(beta) infeasible for beta = {beta:?}: the point is not A-forall-stationary")]
    NotAForallStationary { beta: Vec<usize> },

    #[error("no sign pattern admits a convex combination of the family")]
    SynthesisFailed,

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("no convergence after {iterations} iterations (last residual {last:e})")]
    ConvergenceFailure { iterations: usize, last: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
