use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry violation: {0}")]
    GeometryViolation(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e}, constraint violation {constraint_violation:.3e})")]
    SolverFailure {
        iterations: usize,
        gradient_norm: f64,
        constraint_violation: f64,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("observation {index} ({label}): {source}")]
    Observation {
        index: usize,
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SolverFailure { .. } | Error::NoSolution(_) | Error::DegenerateFit(_) => true,
            Error::Observation { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
