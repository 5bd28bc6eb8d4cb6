//! Error type shared by all pipeline stages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (empty input, mismatched dimensions, bad flag value).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Annotation time falls outside the tolerated trajectory range.
    #[error("annotation time {time} s outside tolerated range [{min} s, {max} s]")]
    OutOfRange { time: f64, min: f64, max: f64 },

    /// A file or JSON payload could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Alignment problem has no cross-recording relatedness to optimize over.
    #[error("degenerate alignment problem: {0}")]
    Degenerate(String),

    /// Evaluation could not establish enough map/ground-truth correspondences.
    #[error("unmatchable evaluation: {0}")]
    Unmatchable(String),

    /// Environment generation could not place landmarks under the separation constraint.
    #[error("environment generation failed: {0}")]
    Generation(String),

    /// External labeling/embedding service could not be reached.
    #[error("service transport failure: {0}")]
    Transport(String),

    /// External service answered with something outside its contract.
    #[error("service protocol violation: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    ///
    /// 1 input/parse errors, 2 degenerate or unmatchable problems,
    /// 3 external-service failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::OutOfRange { .. }
            | Error::Parse(_)
            | Error::Generation(_)
            | Error::Io(_) => 1,
            Error::Degenerate(_) | Error::Unmatchable(_) => 2,
            Error::Transport(_) | Error::Protocol(_) => 3,
        }
    }
}
