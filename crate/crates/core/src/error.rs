use crate::map_optimizer::SolveReport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("value {value} outside range [{lo}, {hi}] for {what}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid time {t}: {reason}")]
    InvalidTime { t: f64, reason: &'static str },

    #[error("point ({x}, {y}) not inside any triangle")]
    PointNotFound { x: f64, y: f64 },

    #[error("triangle id {0} out of bounds")]
    InvalidTriangle(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("inadmissible start state: {0}")]
    InadmissibleStart(String),

    #[error("linear solver failed after {} iterations (lambda exhausted)", report.iterations)]
    SolverFailure { report: Box<SolveReport> },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
