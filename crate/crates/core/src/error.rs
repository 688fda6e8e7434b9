use std::path::PathBuf;

use crate::data::PoiId;
use crate::route::RouteResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{source_name}: line {line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("{source_name}: line {line}: duplicate POI id {id}")]
    DuplicateKey {
        source_name: String,
        line: u64,
        id: PoiId,
    },

    #[error("POI table is empty")]
    EmptyTable,

    #[error("unknown POI id {0}")]
    UnknownPoi(PoiId),

    #[error("{0}")]
    Validation(String),

    #[error("no preference pairs")]
    NoPreferencePairs,

    #[error("no transitions possible")]
    NoTransitions,

    #[error("no feasible route for the query")]
    Infeasible,

    #[error("solver time budget exceeded")]
    Timeout { incumbent: Option<Box<RouteResult>> },

    #[error("enumeration guard exceeded: {count} candidates > {limit}")]
    GuardExceeded { count: u128, limit: u128 },

    #[error("model bundle: {0}")]
    Bundle(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
