use thiserror::Error;

/// Errors raised by the numerical core and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular: min |eigenvalue| {min_abs:e} vs max {max_abs:e}")]
    Singular { min_abs: f64, max_abs: f64 },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e} (index {index}) below threshold {threshold:e}")]
    NotPositiveDefinite {
        eigenvalue: f64,
        index: usize,
        threshold: f64,
    },

    #[error("matrix is not invertible: smallest singular value {0:e}")]
    NotInvertible(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("bound not applicable: {0}")]
    Inapplicable(String),

    #[error("eigengap is zero")]
    ZeroEigengap,

    #[error("near-degenerate eigenvalues at probe {probe}: gap {gap:e}")]
    DegeneratePairing { probe: usize, gap: f64 },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("series too short: {len} < {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    #[error("iteration cap {0} exceeded")]
    IterationCap(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that signal a violated mathematical precondition
    /// (non-convexity, non-definiteness, inapplicable bound) rather than bad input plumbing.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::AssumptionViolation(_)
                | Error::NotPositiveDefinite { .. }
                | Error::Singular { .. }
                | Error::NotInvertible(_)
                | Error::Inapplicable(_)
                | Error::ZeroEigengap
                | Error::DegeneratePairing { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
