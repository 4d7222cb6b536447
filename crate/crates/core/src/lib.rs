//! Prenormally hyperbolic first-order operators on 1+1-dimensional
//! globally hyperbolic model spacetimes.
//!
//! The crate provides symbol-level hyperbolicity predicates for matrix
//! coefficient operators, the reduction of the first-order Cauchy problem to a
//! normally hyperbolic second-order one, retarded and advanced Green's
//! operators realized as driven solves, and the Dirac-current inner product
//! on Cauchy data.

pub mod bundle_ops;
pub mod cauchy;
pub mod convergence;
mod evolve;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod greens;
pub mod grid;
pub mod linalg;
pub mod qft_dirac;
mod stencil;

use thiserror::Error;

pub use evolve::{SolveOptions, DEFAULT_DISSIPATION};
pub use expr::{Expr, ExprError};
pub use field::MatrixField;
pub use geometry::{CauchyLine, Chart1p1, DiagonalMetric, Topology};
pub use grid::{Grid1p1, GridSection};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("point (t={t}, x={x}) lies outside the chart")]
    OutsideChart { t: f64, x: f64 },
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("metric component {component} is not positive at (t={t}, x={x})")]
    NonPositiveMetric { component: &'static str, t: f64, x: f64 },
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid too small for stencil: {0}")]
    GridTooSmall(String),
    #[error("CFL condition violated: {0}")]
    Cfl(String),
    #[error("singular {what} at (t={t}, x={x})")]
    Singular { what: &'static str, t: f64, x: f64 },
    #[error("prenormal hyperbolicity violated: {0}")]
    NotPrenormal(String),
    #[error("operator is not normally hyperbolic (max symbol deviation {0:e})")]
    NotNormallyHyperbolic(f64),
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("causal margin violated: {0}")]
    CausalMargin(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
