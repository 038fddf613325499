use lsvi_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration: unknown names, unparsable values, missing
    /// required keys. Maps to exit code 1.
    #[error("config error: {0}")]
    Config(String),

    /// File I/O problems. Maps to exit code 1.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed data in an input file, with its location.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Anything surfaced by the core library.
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl HarnessError {
    /// Process exit code: 0 success, 1 config/input error, 2 invariant
    /// breach.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(
                CoreError::InvariantBreach(_) | CoreError::NormalizationViolation(_),
            ) => 2,
            _ => 1,
        }
    }
}
