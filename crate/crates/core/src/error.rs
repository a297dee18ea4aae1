use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: header {found:?} does not match schema {expected:?}")]
    HeaderMismatch {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}: row {row}, column `{column}`: `{value}` is not a 64-bit integer")]
    NotAnInteger {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}, column `{column}` is null")]
    NullValue {
        path: PathBuf,
        row: usize,
        column: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{relation}.{attribute}`")]
    UnknownAttribute { relation: String, attribute: String },
    #[error("join graph is cyclic")]
    CyclicQuery,
    #[error("join graph is disconnected")]
    DisconnectedQuery,
    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("missing statistics: {0}")]
    MissingStats(String),
    #[error("query has {n} relations, exhaustive search is limited to {max}")]
    TooManyRelations { n: usize, max: usize },
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error("oracle row cap of {0} exceeded")]
    RowCapExceeded(u64),
    #[error("result cardinality overflowed 64 bits")]
    Overflow,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
