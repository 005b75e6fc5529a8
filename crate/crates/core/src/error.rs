use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Location of a trace defect: the 1-based line in the file (when loaded from
/// disk) and the offending sample, when one could be identified.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub line: Option<usize>,
    pub sample_id: Option<u64>,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.sample_id) {
            (Some(line), Some(id)) => write!(f, "line {line}, sample {id}"),
            (Some(line), None) => write!(f, "line {line}"),
            (None, Some(id)) => write!(f, "sample {id}"),
            (None, None) => f.write_str("trace"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{at}: field '{field}': {message}")]
    Trace {
        at: Location,
        field: &'static str,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("degenerate training set: every label is {label}, the decider would be a constant")]
    DegenerateTraining { label: u8 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mode {0} requires a trained offload decider")]
    MissingModel(&'static str),

    #[error("invalid fractions: {0}")]
    Fractions(String),

    #[error("empty threshold grid")]
    EmptyGrid,

    #[error("{addr}: {source}")]
    Net {
        addr: String,
        #[source]
        source: io::Error,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("benchmark aborted after {completed} completed requests: {source}")]
    Bench {
        completed: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn trace(at: Location, field: &'static str, message: impl Into<String>) -> Self {
        Error::Trace {
            at,
            field,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
