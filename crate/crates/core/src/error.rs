use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("missing response column '{0}'")]
    MissingResponse(String),

    #[error("non-numeric cell at row {row}, column '{column}': {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("binomial response outside [0,1] at row {row}: {value}")]
    ResponseRange { row: usize, value: f64 },

    #[error("constant penalized column {index} ({name})")]
    ConstantColumn { index: usize, name: String },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("duplicate triplet entry at row {row}, column {col}")]
    DuplicateEntry { row: usize, col: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("response orthogonal to all penalized covariates")]
    OrthogonalResponse,

    #[error("perfect separation: {0}")]
    Separation(String),

    #[error("null model did not converge: {0}")]
    NullModel(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("exhaustive L0 search is limited to p <= {max}, got p = {p}")]
    TooLarge { p: usize, max: usize },
}
