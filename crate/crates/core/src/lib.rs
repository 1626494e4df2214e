//! Stationarity certification for complementarity-constrained problems on
//! weighted one-dimensional grids.

pub mod error;
pub mod grid;
pub mod ioc;
pub mod lower_level;
pub mod lp;
pub mod mpcc_lin;
pub mod normalize;
pub mod operators;
pub mod qp;
pub mod regularization;
pub mod stationarity;
pub mod synthesis;

pub use error::{Error, Result};
pub use grid::{CellSet, Grid, GridFunction, Pointwise};
pub use operators::LinOp;
