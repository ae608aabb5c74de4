use std::path::PathBuf;

/// Errors produced by the retargeting engine.
///
/// The variants map onto the coarse failure classes that the command-line
/// front end turns into exit codes: configuration problems, API misuse,
/// numerical failures and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: unknown op kinds, width mismatches, bad weights.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller violated a precondition (bad handle, wrong length, unknown name).
    #[error("usage error: {0}")]
    Usage(String),

    /// A function probed during gradient checking returned a non-finite value.
    #[error("non-finite evaluation at coordinate {index}")]
    Evaluation { index: usize },

    /// A loss became non-finite during training or optimization.
    #[error("non-finite loss at frame {frame}: {detail}")]
    NonFinite { frame: usize, detail: String },

    /// A file failed to parse.
    #[error("{}:{line}: {field}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    /// Parsed content violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerics rather than inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Evaluation { .. })
    }
}
