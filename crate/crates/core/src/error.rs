//! Crate-wide error type.
//!
//! Two broad families, which the CLI maps to distinct process exit codes:
//! configuration problems (bad instance files, missing fields, values outside
//! their legal ranges) and runtime numerical failures (degenerate matrices,
//! vanishing rank-one denominators, broken structural contracts).

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix operation lost positive definiteness, failed to converge, or
    /// hit a vanishing denominator.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// An input violated a structural contract: a matrix that should be
    /// symmetric is not, dimensions disagree, a direction vector is not unit.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A policy needed a feedback channel the caller did not provide.
    #[error("missing feedback: {0}")]
    MissingFeedback(&'static str),

    /// A safe-set description lacks a field its variant requires, or carries
    /// one it must not.
    #[error("safe-set spec mismatch: {0}")]
    SpecMismatch(&'static str),

    /// A mixing coefficient exceeded the cap that guarantees safety.
    #[error("safety contract: {0}")]
    SafetyContract(String),

    /// The instance falls outside the regime the algorithm supports
    /// (e.g. a nonpositive safety gap for the upper-bound variant).
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// The requested quantity is undefined for this policy.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Run logs that cannot be aggregated together.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// Filesystem failure, with the offending path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Unparsable input file.
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// Exit code for the CLI: 2 for configuration/input problems, 3 for
    /// runtime numerical failures. (0 is success; 4 is reserved for failed
    /// verification checks, which are not errors of this type.)
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_)
            | Error::MissingFeedback(_)
            | Error::SpecMismatch(_)
            | Error::UnsupportedRegime(_)
            | Error::Unsupported(_)
            | Error::Io { .. }
            | Error::Parse { .. } => 2,
            Error::Degenerate(_)
            | Error::Contract(_)
            | Error::SafetyContract(_)
            | Error::Aggregation(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
