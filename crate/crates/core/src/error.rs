use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label} at index {index} is outside [0, {class_count})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        class_count: usize,
    },
    #[error("non-finite value in {matrix} at ({row}, {col})")]
    NonFiniteValue {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("prototype row {0} is all zeros and cannot be normalized")]
    ZeroPrototype(usize),
    #[error("invalid class partition: {0}")]
    InvalidPartition(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("not enough classes: {needed} requested for val+test but only {available} classes exist")]
    NotEnoughClasses { needed: usize, available: usize },
    #[error("class {0} has no samples left in its pool")]
    EmptyPool(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("linear system is singular (pivot {pivot} at column {column})")]
    SingularSystem { column: usize, pivot: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss diverged at epoch {epoch}, step {step}")]
    DivergedLoss { epoch: usize, step: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("class {0} has no ground-truth samples")]
    EmptyClass(usize),
    #[error("score matrix has no seen candidate class")]
    NoSeenClass,
    #[error("score matrix has no unseen candidate class")]
    NoUnseenClass,
    #[error("class {0} is not a candidate class of the score matrix")]
    UnknownClass(usize),
    #[error("ground truth has no {0} samples")]
    MissingPopulation(&'static str),
    #[error("bad magic in matrix file {0}")]
    BadMagic(PathBuf),
    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("trailing bytes in matrix file {0}")]
    TrailingBytes(PathBuf),
    #[error("non-numeric cell at line {line}, column {col}: {cell:?}")]
    NonNumericCell {
        line: usize,
        col: usize,
        cell: String,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
