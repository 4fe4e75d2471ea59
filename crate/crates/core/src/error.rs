use std::path::PathBuf;

/// Broad failure class, used to pick process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Algorithm,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("label column {0:?} not found")]
    MissingLabelColumn(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample size {requested} exceeds dataset size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("dataset of {n} points is too small for family {family} (needs at least {required})")]
    TooFewPoints {
        family: String,
        n: usize,
        required: usize,
    },
    #[error("member set is empty")]
    EmptyMembers,
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error(
        "found {found} components at tau = {tau} but k = {k} were requested; try a higher tau"
    )]
    TooFewComponents { found: usize, k: usize, tau: f64 },
    #[error("every grid cell failed ({cells} cells); first failure: {first}")]
    AllCellsFailed { cells: usize, first: String },
    #[error("ground-truth labels are required for {0}")]
    LabelsRequired(&'static str),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) | Error::ModelFormat(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::RaggedRow { .. }
            | Error::NonNumeric { .. }
            | Error::MissingLabelColumn(_)
            | Error::EmptyDataset
            | Error::DimensionMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::SampleTooLarge { .. }
            | Error::TooFewPoints { .. }
            | Error::LabelsRequired(_) => ErrorClass::Data,
            Error::EmptyMembers
            | Error::EmptyCluster(_)
            | Error::TooFewComponents { .. }
            | Error::AllCellsFailed { .. } => ErrorClass::Algorithm,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
