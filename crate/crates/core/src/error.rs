//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Argument outside the operation's domain (non-positive variance, empty dims, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A computation produced a non-finite value.
    #[error("numeric error in {context}: {detail}")]
    Numeric { context: String, detail: String },

    /// Training diverged; the loss trace up to the failure is attached.
    #[error("training error: non-finite loss at iteration {iteration}")]
    Training {
        iteration: usize,
        trace: Vec<f64>,
    },

    /// Problem size exceeds a hard enumeration guard.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Singular or otherwise unsolvable linear system.
    #[error("linear algebra error: {0}")]
    LinAlg(String),

    /// Failure inside one simulation block.
    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
