//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by channel conversions, samplers and optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (residual {residual:.3e} exceeds tolerance {tol:.3e})")]
    NotHermitian { residual: f64, tol: f64 },

    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("map is not trace preserving (partial-trace residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },

    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("columns are not orthonormal (residual {residual:.3e})")]
    NotOrthonormal { residual: f64 },

    #[error("rank deficiency: discarded eigenvalue mass {discarded:.3e} exceeds {tol:.3e} for requested rank {rank}")]
    RankDeficient { discarded: f64, tol: f64, rank: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate frame: orthogonal complement construction lost rank")]
    DegenerateFrame,

    #[error("parameter too concentrated for stable sampling (max eigenvalue {max_eigenvalue:.3e})")]
    IllConditioned { max_eigenvalue: f64 },

    #[error("broken Hermitian invariant: imaginary residue {residue:.3e} above tolerance")]
    ImaginaryResidue { residue: f64 },

    #[error("line search failed after {backtracks} backtracks")]
    LineSearchFailure { backtracks: usize },

    #[error("all {starts} estimation starts failed the line search (best partial value {best_value})")]
    EstimationFailed { starts: usize, best_value: f64 },

    #[error("step too large: Cayley solve singular at tau={tau:.3e}")]
    StepTooLarge { tau: f64 },

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("probability {value:.6} outside the unit interval")]
    ProbabilityRange { value: f64 },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
