//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the linear-algebra kernels, estimators, optimizers,
/// reference solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is rank deficient (pivot ratio {0:.3e})")]
    RankDeficient(f64),

    #[error("cannot raise nonpositive eigenvalue {value:.3e} to power {power}")]
    SingularPower { value: f64, power: f64 },

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("optimizer state error: {0}")]
    StateError(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("unsupported shape {shape:?} for variant {variant}")]
    UnsupportedShape { shape: Vec<usize>, variant: String },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("the seed grid is empty")]
    EmptyGrid,

    #[error("run diverged at step {0}")]
    Diverged(usize),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
