use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix shape is invalid: {0}")]
    BadShape(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("system is inconsistent: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    InconsistentSystem { residual: f64, tolerance: f64 },

    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("row {0} has zero norm")]
    ZeroRow(usize),

    #[error("degenerate step: reflected point coincides with the current iterate")]
    DegenerateStep,

    #[error("stalled after {attempts} degenerate samples at a non-solution (residual {residual:.3e})")]
    StalledAtNonSolution { attempts: usize, residual: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported Matrix Market field: {0}")]
    UnsupportedField(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerically degenerate input rather than
    /// malformed data.
    pub fn is_numeric_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMatrix(_)
                | Error::ZeroRow(_)
                | Error::DegenerateStep
                | Error::StalledAtNonSolution { .. }
                | Error::NotSymmetric { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
