use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: input contains no interactions")]
    EmptyInput(PathBuf),

    #[error("no interactions left after {k}-core filtering")]
    EmptyAfterFilter { k: usize },

    #[error("catalog has {0} item(s); at least 2 are required")]
    DegenerateCatalog(usize),

    #[error("cannot sample negatives: all {catalog} items are excluded")]
    Unsampleable { catalog: usize },

    #[error("non-finite score {value} at index {index}")]
    NonFiniteScore { index: usize, value: f64 },

    #[error("invalid target item {0}")]
    InvalidTarget(u32),

    #[error("invalid candidate item {0}")]
    InvalidCandidate(u32),

    #[error("item id {id} outside [0, {max}]")]
    InvalidId { id: u32, max: u32 },

    #[error("loss has no valid rows")]
    EmptyLoss,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
