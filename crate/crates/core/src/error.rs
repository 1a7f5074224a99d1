use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error categories, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample is degenerate: all {n} values are identical ({value})")]
    DegenerateSample { n: usize, value: f64 },

    #[error("too few samples to fit: got {got}, need at least {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("value {value} does not exceed the threshold {threshold}")]
    ThresholdViolation { value: f64, threshold: f64 },

    #[error("bootstrap degenerate: {failed} of {total} replicates failed to fit")]
    BootstrapDegenerate { failed: usize, total: usize },

    #[error("input contains non-finite values")]
    NonFiniteInput,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("split leaves an empty part ({n_rows} rows, train fraction {fraction})")]
    EmptySplit { n_rows: usize, fraction: f64 },

    #[error("all {0} cross-validation splits failed")]
    AllSplitsFailed(usize),

    #[error("no error exceeds the threshold {0}")]
    NoExceedances(f64),

    #[error("no valid threshold: {0}")]
    NoValidThreshold(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: u64, message: String },

    #[error("target column '{0}' not found")]
    MissingTargetColumn(String),

    #[error("no rows or features left after preprocessing")]
    EmptyAfterPreprocessing,

    #[error("optimizer did not converge")]
    NotConverged,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::DegenerateSample { .. }
            | Error::TooFewSamples { .. }
            | Error::BootstrapDegenerate { .. }
            | Error::RankDeficient
            | Error::AllSplitsFailed(_)
            | Error::NoValidThreshold(_)
            | Error::NotConverged => ErrorClass::Numeric,
            Error::ThresholdViolation { .. }
            | Error::NonFiniteInput
            | Error::ShapeMismatch { .. }
            | Error::EmptySplit { .. }
            | Error::NoExceedances(_)
            | Error::ParseError { .. }
            | Error::MissingTargetColumn(_)
            | Error::EmptyAfterPreprocessing
            | Error::Io(_) => ErrorClass::Data,
        }
    }
}
