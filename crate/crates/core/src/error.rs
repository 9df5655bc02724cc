use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Solver outcomes such as divergence are not errors; they are encoded in
/// [`crate::solver::Verdict`]. Errors are reserved for invalid input and
/// broken preconditions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("field shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("invalid nonlinearity: {0}")]
    Nonlinearity(String),
    #[error("eigen iteration did not converge after {iterations} steps (residual {residual:e})")]
    Eigen { iterations: usize, residual: f64 },
    #[error("profile construction failed: {0}")]
    Profile(String),
    #[error("singular linear system at row {0}")]
    Singular(usize),
    #[error("invalid bracket: {0}")]
    Bracket(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
