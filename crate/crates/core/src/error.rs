use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SklError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("split {index}: {source}")]
    Split {
        index: usize,
        #[source]
        source: Box<SklError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Degenerate,
}

impl SklError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SklError::Numerical(_) => ErrorKind::Numerical,
            SklError::Degenerate(_) => ErrorKind::Degenerate,
            SklError::Split { source, .. } => source.kind(),
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn in_split(self, index: usize) -> SklError {
        SklError::Split {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, SklError>;

macro_rules! arg_err {
    ($($t:tt)*) => { $crate::error::SklError::Argument(format!($($t)*)) };
}
pub(crate) use arg_err;
