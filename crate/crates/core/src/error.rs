use thiserror::Error;

/// Errors raised by the goodness-of-fit toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("sample contains a non-finite value at position {0}")]
    NonFinite(usize),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("grid level {0} is outside 0..=20")]
    LevelOutOfRange(u32),

    #[error("operation not supported in {0} mode")]
    UnsupportedMode(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("calibration required: no entry for {0}")]
    CalibrationRequired(String),

    #[error("{reps} replications cannot resolve order statistic {needed}")]
    InsufficientReplications { reps: usize, needed: usize },

    #[error("penalty search bound {0} is insufficient")]
    PenaltyBound(f64),

    #[error("integral does not converge: {0}")]
    Divergent(String),

    #[error("calibration table written by engine {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
