//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky factorization of a correlation matrix failed. With a zero
    /// nugget this usually means duplicated design rows or abscissae.
    #[error("singular correlation matrix: {0}")]
    SingularMatrix(String),

    /// Abscissae are not strictly increasing or contain duplicates.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A pivot or Schur complement fell below the breakdown threshold.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    /// The GLS normal matrix V'R⁻¹V is singular.
    #[error("rank-deficient basis: the regression terms are collinear on this design")]
    RankDeficientBasis,

    /// Every optimizer start failed to produce a finite objective value.
    #[error("optimization failed: {0}")]
    OptimFailed(String),

    /// A combined precision matrix failed its positive-definiteness floor.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A dense reference computation was requested above its size cap.
    #[error("problem size {size} exceeds the dense reference cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    /// An operation that requires a regular grid received irregular data.
    #[error("dataset is not on a regular grid: {0}")]
    NotRegularGrid(String),

    /// Malformed or inconsistent input data (CSV contents, masks, settings).
    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl Error {
    /// Process exit code for the CLI: 2 for input problems, 3 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data(_) | Error::Config(_) | Error::InvalidGrid(_) | Error::Io(_) => 2,
            Error::SingularMatrix(_)
            | Error::DimensionMismatch { .. }
            | Error::NumericalBreakdown(_)
            | Error::RankDeficientBasis
            | Error::OptimFailed(_)
            | Error::NotPositiveDefinite(_)
            | Error::SizeCapExceeded { .. }
            | Error::NotRegularGrid(_) => 3,
        }
    }
}
