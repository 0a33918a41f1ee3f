use std::path::PathBuf;

use num_complex::Complex64;

/// Everything that can go wrong between model assembly and a finished report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid gain vector: {0}")]
    InvalidGain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} relative to norm {norm:.3e})")]
    NotSymmetric { asymmetry: f64, norm: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("system is not asymptotically stable (spectral abscissa {abscissa:.3e})")]
    Unstable { abscissa: f64 },

    #[error("shift {sigma} coincides with an internal-damping pole of mode {mode}")]
    PoleCollision { sigma: Complex64, mode: usize },

    #[error("inner {size}x{size} correction matrix is singular at shift {sigma} (condition {condition:.3e})")]
    ShiftDegenerate {
        sigma: Complex64,
        size: usize,
        condition: f64,
    },

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("all basis columns are numerically zero")]
    DegenerateBasis,

    #[error("projected {0} lost positive definiteness")]
    ProjectionDegenerate(&'static str),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("full-order oracle refused: n = {n} exceeds the cap {cap}; use the reduced path or raise the cap")]
    OracleCapExceeded { n: usize, cap: usize },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
