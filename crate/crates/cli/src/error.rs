use std::path::PathBuf;

use bivirus::Error as KernelError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("{context}: {source}")]
    Kernel {
        context: String,
        #[source]
        source: KernelError,
    },
    #[error("resource guard: {0}")]
    Guard(String),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Syntax(_) | CliError::Field { .. } | CliError::Guard(_) => 1,
            CliError::Kernel { source, .. } if is_validation(source) => 1,
            _ => 2,
        }
    }
}

fn is_validation(e: &KernelError) -> bool {
    matches!(
        e,
        KernelError::NotSquare { .. }
            | KernelError::EmptyGraph
            | KernelError::DimensionMismatch { .. }
            | KernelError::InvalidEntry { .. }
            | KernelError::NotMetzler { .. }
            | KernelError::Reducible { .. }
            | KernelError::RateOnNonArc { .. }
            | KernelError::InvalidState(_)
            | KernelError::InvalidParameter(_)
            | KernelError::NonzeroDiagonal { .. }
            | KernelError::ChainTooLarge { .. }
    )
}

/// Attaches a context string to kernel errors.
pub trait Context<T> {
    fn context(self, context: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for bivirus::Result<T> {
    fn context(self, context: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Kernel {
            context: context.into(),
            source,
        })
    }
}
