use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of a network, input vector or dataset disagree.
    #[error("structural error: {0}")]
    Structure(String),

    /// Non-finite or otherwise unusable input values.
    #[error("input error: {0}")]
    Input(String),

    /// A model file could not be turned into a valid network.
    #[error("model load error at `{field}`: {message}")]
    ModelLoad { field: String, message: String },

    #[error("unsupported activation `{tag}` in layers[{layer}].activation")]
    UnsupportedActivation { layer: usize, tag: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("dataset has a single class")]
    SingleClass,

    #[error("config error: {0}")]
    Config(String),

    /// Training diverged or another computation produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Exhaustive enumeration would exceed the configured budget.
    #[error("exhaustive check infeasible: {0}")]
    Infeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line driver.
    ///
    /// 1 usage/config error, 2 data error, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
