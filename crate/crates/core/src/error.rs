use thiserror::Error;

/// Failures shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },

    #[error("every row of the matrix is zero")]
    AllZeroRows,

    #[error("row {0} has a positive leverage score but zero sampling probability")]
    ZeroProbabilityWithPositiveScore(usize),

    #[error("sketch size {m} too small (bound {required}){}", row_suffix(*.index))]
    SketchTooSmall {
        m: usize,
        required: f64,
        index: Option<usize>,
    },

    #[error("every Monte-Carlo trial produced a singular sketched matrix")]
    AllTrialsSingular,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at position {0}")]
    NonFinite(usize),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("label {value} at row {row} is outside the label domain")]
    LabelDomain { row: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn row_suffix(index: Option<usize>) -> String {
    match index {
        Some(i) => format!(" at row {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable variant name, used by the CLI when reporting failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NotPowerOfTwo(_) => "NotPowerOfTwo",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::AllZeroRows => "AllZeroRows",
            Error::ZeroProbabilityWithPositiveScore(_) => "ZeroProbabilityWithPositiveScore",
            Error::SketchTooSmall { .. } => "SketchTooSmall",
            Error::AllTrialsSingular => "AllTrialsSingular",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::NotSymmetric => "NotSymmetric",
            Error::LabelDomain { .. } => "LabelDomainError",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
