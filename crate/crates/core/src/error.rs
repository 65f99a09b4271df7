use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("topology error: {0}")]
    Topology(String),

    #[error("registry error: {0}")]
    Registry(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// A station-week has non-cancelled rides but none of them carries valid counts.
    #[error("unrecoverable missing counter data for station {station} in week {week}")]
    UnrecoverableMissingData { station: String, week: usize },

    #[error("need at least {required} observations to fit, got {got}")]
    InsufficientObservations { required: usize, got: usize },

    #[error("singular design matrix: column `{column}` is collinear with earlier columns")]
    SingularDesign { column: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate week {week}: {what} total is zero")]
    DegenerateWeek { week: usize, what: &'static str },

    /// A positive margin has no positive seed cell to carry it.
    #[error("structurally infeasible: {axis} {index} has positive margin but an all-zero seed")]
    StructuralInfeasibility { axis: &'static str, index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
