use thiserror::Error;

/// Errors raised across the library. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite sample {value} at ({x}, {y}, {z})")]
    Sampling { x: f64, y: f64, z: f64, value: f64 },

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("singular kernel evaluation: {0}")]
    Singularity(String),

    #[error("time profile moments: {0}")]
    Moment(String),

    #[error("spectrum is not conjugate-symmetric (relative defect {defect:e})")]
    Symmetry { defect: f64 },

    #[error("regularization parameter selection failed: {0}")]
    Selection(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singularity(_) => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }
}
