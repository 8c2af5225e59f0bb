use std::path::PathBuf;

use thiserror::Error;

use crate::cohort::Diagnosis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants are grouped by [`ErrorKind`], which the CLI maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input has no header row")]
    MissingHeader,
    #[error("duplicate subject id {0:?}")]
    DuplicateSubjectId(String),
    #[error("unknown diagnosis label {label:?} on row {row}")]
    UnknownDiagnosisLabel { row: usize, label: String },
    #[error("non-numeric or non-finite cell at row {row}, column {col}: {value:?}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("cleaning removed every subject of {0}")]
    AllSubjectsRemoved(String),
    #[error("class {class} has {have} subjects, need at least {need}")]
    ClassTooSmall {
        class: Diagnosis,
        have: usize,
        need: usize,
    },
    #[error("class {0} is absent from the table")]
    EmptyClass(Diagnosis),
    #[error("table must contain exactly two diagnoses, found {0:?}")]
    NotBinary(Vec<Diagnosis>),
    #[error("fold {0} lacks one of the two classes")]
    FoldMissingClass(usize),
    #[error("{0} subjects appear in both training and test data")]
    TrainTestOverlap(usize),
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),

    #[error("a group has fewer than two samples")]
    DegenerateInput,
    #[error("feature index {index} out of range for {len} features")]
    SubsetOutOfRange { index: usize, len: usize },
    #[error("covariance for {0} is not positive definite")]
    SingularCovariance(Diagnosis),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("both hemisphere subsets are empty")]
    BothSubsetsEmpty,
    #[error("no feature passes the significance level")]
    NoSignificantFeatures,
    #[error("every candidate feature failed to fit")]
    SelectionFailed,
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

/// Coarse error classes, stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Usage,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Io => "io",
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Io | ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io { .. } => ErrorKind::Io,
            Csv(e) if e.is_io_error() => ErrorKind::Io,
            Config(_) => ErrorKind::Usage,
            Csv(_)
            | Json(_)
            | MissingHeader
            | DuplicateSubjectId(_)
            | UnknownDiagnosisLabel { .. }
            | NonNumericCell { .. }
            | SchemaMismatch(_)
            | AllSubjectsRemoved(_)
            | ClassTooSmall { .. }
            | EmptyClass(_)
            | NotBinary(_)
            | FoldMissingClass(_)
            | TrainTestOverlap(_)
            | InvalidSpec(_)
            | SubsetOutOfRange { .. }
            | DimensionMismatch { .. }
            | BothSubsetsEmpty
            | NoSignificantFeatures => ErrorKind::Data,
            DegenerateInput | SingularCovariance(_) | SelectionFailed | Consistency(_) => {
                ErrorKind::Numerical
            }
        }
    }
}
