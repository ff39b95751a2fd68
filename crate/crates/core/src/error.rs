use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("inconsistent model: {0}")]
    Consistency(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("agent `{agent}` cannot perform operation `{op}`")]
    NoCapability { agent: String, op: String },

    #[error("no time model for agent `{agent}` on operation `{op}`")]
    MissingTimeModel { agent: String, op: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfiguration(Vec<String>),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("branch-and-bound node limit of {0} reached before proving optimality")]
    HitNodeLimit(usize),

    #[error("linear program solver failed: {0}")]
    NumericalFailure(String),

    #[error("problem too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("no time baseline for agent `{agent}` on operation `{op}`")]
    UnknownPair { agent: String, op: String },

    #[error("sample duration must be positive, got {0}")]
    NonPositiveDuration(f64),

    #[error("no candidate satisfies the selection policy: {}", .0.join("; "))]
    NoFeasibleCandidate(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn from_json(source_name: &str, err: serde_json::Error) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
