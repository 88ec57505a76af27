use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] qnpe::Error),

    #[error("{0}")]
    Usage(String),

    #[error("compare needs at least two runs on the same problem: {0}")]
    ProblemMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BenchError {
    pub fn category(&self) -> &'static str {
        match self {
            BenchError::Core(e) => e.category(),
            BenchError::Usage(_) => "UsageError",
            BenchError::ProblemMismatch(_) => "ProblemMismatch",
            BenchError::Io { .. } => "IoError",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Core(e) if e.is_usage_error() => 2,
            BenchError::Core(_) => 1,
            BenchError::Usage(_) | BenchError::ProblemMismatch(_) => 2,
            BenchError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
