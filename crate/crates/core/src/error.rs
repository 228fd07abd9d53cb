use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("query ({lat}, {lon}) at {time} is outside grid `{grid}`")]
    OutOfDomain {
        grid: String,
        lat: f64,
        lon: f64,
        time: String,
    },

    #[error("grid `{grid}` has no data around ({lat}, {lon})")]
    MissingData { grid: String, lat: f64, lon: f64 },

    #[error("cannot resolve feature {index} ({name}): {source}")]
    Assembly {
        index: usize,
        name: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid model input: {0}")]
    Input(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("incompatible tile: {0}")]
    Incompatible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}
