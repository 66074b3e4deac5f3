use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at subject {row}, region {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate {what} label '{label}'")]
    DuplicateLabel { what: &'static str, label: String },

    #[error("empty {what} label at position {index}")]
    EmptyLabel { what: &'static str, index: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance block for the selected regions is numerically singular")]
    SingularSubset,

    #[error("{0}")]
    Numerical(String),

    #[error("label mismatch at position {index}: expected '{expected}', found '{found}'")]
    LabelMismatch {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used by the CLI diagnostics and the C API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non_finite",
            Error::DuplicateLabel { .. } => "duplicate_label",
            Error::EmptyLabel { .. } => "empty_label",
            Error::Dimension(_) => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidGraph(_) => "invalid_graph",
            Error::InvalidModel(_) => "invalid_model",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::SingularSubset => "singular_subset",
            Error::Numerical(_) => "numerical",
            Error::LabelMismatch { .. } => "label_mismatch",
            Error::Parse(_) => "parse",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite | Error::SingularSubset | Error::Numerical(_)
        )
    }
}
