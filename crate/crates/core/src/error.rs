use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Computation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unit {unit} has {cycles} cycles, needs more than {required}")]
    UnitTooShort {
        unit: String,
        cycles: usize,
        required: usize,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("unit {unit}: cycle {cycle} has non-positive maximum altitude {max_altitude}")]
    NonPositiveAltitude {
        unit: String,
        cycle: i64,
        max_altitude: f64,
    },
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("empty fleet")]
    EmptyFleet,
    #[error("unit {0} raised no alarm")]
    NoAlarm(String),
    #[error("unit {unit}: cycle {cycle} is not available")]
    CycleOutOfRange { unit: String, cycle: i64 },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("unknown configuration key: {0}")]
    UnknownKey(String),
    #[error("configuration type error: {0}")]
    TypeError(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("empty file: {}", .0.display())]
    EmptyFile(PathBuf),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch {
        found: &'static str,
        expected: &'static str,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::ConfigInvalid(_) | Error::UnknownKey(_) | Error::TypeError(_) => {
                ErrorCategory::Config
            }
            Error::UnitTooShort { .. }
            | Error::InvalidSeries(_)
            | Error::MissingColumn(_)
            | Error::NonNumericCell { .. }
            | Error::EmptyFile(_)
            | Error::VersionMismatch { .. }
            | Error::CorruptCheckpoint(_)
            | Error::KindMismatch { .. }
            | Error::Csv(_)
            | Error::Io { .. }
            | Error::NonPositiveAltitude { .. }
            | Error::EmptyFleet
            | Error::EmptyDataset(_) => ErrorCategory::Data,
            Error::InsufficientData(_)
            | Error::ShapeMismatch { .. }
            | Error::NoAlarm(_)
            | Error::CycleOutOfRange { .. }
            | Error::SingleCluster => ErrorCategory::Computation,
        }
    }
}
