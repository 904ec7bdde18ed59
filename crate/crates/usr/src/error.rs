use std::path::PathBuf;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: usr_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error(transparent)]
    Core(#[from] usr_core::Error),
}

impl EvalError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        EvalError::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 backend.
    pub fn exit_code(&self) -> i32 {
        use usr_core::Error as E;
        match self {
            EvalError::Config(_) => 2,
            EvalError::Parse { .. }
            | EvalError::Record { .. }
            | EvalError::Io { .. }
            | EvalError::Data(_) => 3,
            EvalError::Backend(_) => 4,
            EvalError::Core(e) => match e {
                E::Argument(_) | E::UnavailableVariant(_) => 2,
                E::Backend(_) | E::BackendContract(_) | E::Unsupported(_) => 4,
                _ => 3,
            },
        }
    }
}
