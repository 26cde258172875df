//! Error taxonomy shared by the library and the `dustat` binary.
//!
//! Every error renders as a single line with a machine-greppable prefix
//! (`E_CONFIG`, `E_DATA`, `E_NUM`) and maps to a stable process exit code.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    /// Invalid configuration: bad flags, fold counts, grids, dimensions.
    #[error("E_CONFIG: {0}")]
    Config(String),
    /// Invalid data: missing cells, non-finite values, domain violations.
    #[error("E_DATA: {0}")]
    Data(String),
    /// Numerical failure: singular systems, non-convergence, non-finite kernels.
    #[error("E_NUM: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
