use std::path::PathBuf;

use crate::encode::GeoError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dataset has no records")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("row sink failed after {rows_emitted} rows: {source}")]
    SinkFailure {
        rows_emitted: usize,
        #[source]
        source: BoxError,
    },

    #[error("no split within {attempts} attempts met the ratio tolerance (best relative gap: {best_gap:?})")]
    UnbalancedSplit {
        attempts: usize,
        best_gap: Option<f64>,
    },

    #[error("expanded dataset has no positive rows")]
    NoPositiveRows,

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("nominal column `{0}` has no values")]
    EmptyColumn(String),

    #[error(transparent)]
    Geo(#[from] GeoError),

    #[error("training data contains a single class")]
    SingleClassData,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergedTraining { epoch: usize },

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("schema fingerprint mismatch: model expects {expected:016x}, input has {found:016x}")]
    SchemaFingerprintMismatch { expected: u64, found: u64 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("duration histogram is empty")]
    DegenerateHistogram,

    #[error("labels contain a single class")]
    SingleClassLabels,

    #[error("prediction sets cover different patients or horizons")]
    PatientSetMismatch,

    #[error("score vector has zero variance")]
    ZeroVariance,

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("degenerate synthetic spec: {0}")]
    DegenerateSpec(String),

    #[error("{}: {message}", location(path.as_deref(), *line))]
    Config {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}: {source}", location(path.as_deref(), *line))]
    Csv {
        path: Option<PathBuf>,
        line: Option<u64>,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location<L: std::fmt::Display>(path: Option<&std::path::Path>, line: Option<L>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{}", p.display(), l),
        (Some(p), None) => p.display().to_string(),
        (None, Some(l)) => format!("line {l}"),
        (None, None) => "input".to_string(),
    }
}

impl Error {
    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            path: None,
            line: Some(line),
            message: message.into(),
        }
    }

    /// I/O failure on a named file.
    pub(crate) fn at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Error::File {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attach a file path to config and CSV errors that lack one.
    pub fn with_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Config {
                path: None,
                line,
                message,
            } => Error::Config {
                path: Some(p.into()),
                line,
                message,
            },
            Error::Csv {
                path: None,
                line,
                source,
            } => Error::Csv {
                path: Some(p.into()),
                line,
                source,
            },
            other => other,
        }
    }

    /// True for errors caused by invalid user input rather than the runtime.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Geo(g) => !g.is_upstream(),
            Error::Io(_) | Error::File { .. } | Error::SinkFailure { .. } | Error::DivergedTraining { .. } => false,
            _ => true,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(source: csv::Error) -> Self {
        let line = source.position().map(|p| p.line());
        Error::Csv {
            path: None,
            line,
            source,
        }
    }
}
