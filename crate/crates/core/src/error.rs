use thiserror::Error;

/// Errors raised while building or validating planning inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("mode {mode:?} out of range (modes per dimension = {modes_per_dim})")]
    ModeOutOfRange { mode: Vec<usize>, modes_per_dim: usize },
    #[error("measure is not normalized: integral = {integral} (tolerance {tolerance})")]
    Unnormalized { integral: f64, tolerance: f64 },
    #[error("{which} state is unsafe for barrier `{barrier}` (h = {value})")]
    UnsafeBoundary {
        which: &'static str,
        barrier: String,
        value: f64,
    },
    #[error("{which} state projects outside the workspace")]
    OutsideWorkspace { which: &'static str },
    #[error("rejection sampling failed after {attempts} consecutive draws; the scene is over-constrained")]
    SamplingExhausted { attempts: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors that describe a violated problem invariant (as
    /// opposed to malformed input).
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::UnsafeBoundary { .. }
                | Error::OutsideWorkspace { .. }
                | Error::Unnormalized { .. }
                | Error::SamplingExhausted { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
