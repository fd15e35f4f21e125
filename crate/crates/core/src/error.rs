use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid weight matrix: {0}")]
    InvalidMatrix(String),

    #[error("graph is disconnected: {0}")]
    DisconnectedGraph(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("level index {index} out of range for {num_levels} levels")]
    InvalidIndex { index: usize, num_levels: usize },

    #[error("dimension mismatch: {0}")]
    InvalidDimension(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate baseline: coordinate {0} has zero variance")]
    DegenerateBaseline(usize),

    #[error("train fraction {0} must lie in (0, 1)")]
    InvalidFraction(f64),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("incomplete metric table, missing: {}", .0.join("; "))]
    IncompleteTable(Vec<String>),

    #[error("unknown metric: {0}")]
    UnknownMetric(String),

    #[error("incomplete rank vector, missing: {}", .0.join(", "))]
    IncompleteRanks(Vec<String>),

    #[error("duplicate table entry: {0}")]
    DuplicateEntry(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{stage} stage failed ({context}): {source}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Numerical and invariant failures (exit code 2) as opposed to
    /// configuration and input errors (exit code 1).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure(_)
            | Error::TrainingDiverged { .. }
            | Error::InvariantViolation(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, context: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            context: context.into(),
            source: Box::new(self),
        }
    }
}
