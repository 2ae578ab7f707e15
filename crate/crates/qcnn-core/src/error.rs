use thiserror::Error;

/// Error type shared across the simulator, model, training and data layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A size limit was exceeded (qubit count, oracle scale, feature count).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    /// Structural problem in an input file (missing column, wrong label set).
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format version: {0}")]
    Version(String),

    /// Non-finite value produced during a numeric computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 usage/config, 3 numeric, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }
}
