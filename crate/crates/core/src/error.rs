//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by inference, simulation and evaluation routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A special-function argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation requested exactly at a singular point of a density.
    #[error("singular point: {0}")]
    SingularPoint(String),

    /// An argument violates a precondition (shape, range, consistency).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input data is malformed (non-finite entries, too few rows).
    #[error("data error: {0}")]
    Data(String),

    /// Noise level incompatible with the spectrum (sigma^2 >= lambda_d,
    /// or no trailing eigenvalues left to estimate from).
    #[error("degenerate noise: {0}")]
    DegenerateNoise(String),

    /// An observation has exactly zero norm over the active support.
    #[error("degenerate row {row}: zero norm over the active support")]
    DegenerateRow { row: usize },

    /// A covariance stopped being positive definite mid-run.
    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    /// An M-step update left the feasible region.
    #[error("degenerate update: {0}")]
    DegenerateUpdate(String),

    /// Operation requires at least one active variable.
    #[error("empty support")]
    EmptySupport,

    /// Every candidate model along the selection path failed.
    #[error("selection failed: {0}")]
    SelectionFailure(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs).
    /// The CLI maps these to exit code 3, input problems to exit code 2.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Argument(_) | Error::Data(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
