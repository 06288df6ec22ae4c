use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the toolkit.
///
/// Variants fall into three families that callers (notably the CLI) map to
/// distinct exit codes: invalid parameters ([`Error::is_validation`]),
/// malformed or inconsistent data, and I/O failures ([`Error::is_io`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record `{id}`: expected {expected} features, found {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("record `{id}`: expected {expected} labels, found {found}")]
    LabelLengthMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("record `{id}`: label entries must be 0 or 1")]
    NonBinaryLabel { id: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: non-finite feature value")]
    NonFinite { id: String },

    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("id `{id}` appears in both group `{first}` and group `{second}`")]
    OverlappingGroups {
        id: String,
        first: String,
        second: String,
    },

    #[error("reference group `{0}` is empty")]
    EmptyGroup(String),

    #[error("reference grouping needs at least 2 groups, found {0}")]
    TooFewGroups(usize),

    #[error("record `{0}` carries no labels")]
    Unlabeled(String),

    #[error("no label has a positive instance")]
    NoPositiveLabels,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{0}")]
    InvalidParameter(String),

    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    TooFewDistinctPoints { k: usize, distinct: usize },

    #[error("row {row}: expected dimension {expected}, found {found}")]
    RowDimension {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {0}: non-finite value")]
    NonFiniteRow(usize),

    #[error("silhouette needs at least 2 clusters, found {0}")]
    SingleCluster(usize),

    #[error("no clustered id appears in the reference grouping")]
    NoOverlap,

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }

    /// Errors caused by caller-supplied parameters rather than by the data.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidParameter(_))
    }
}
