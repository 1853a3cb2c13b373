use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: invalid parameters, malformed configuration, mismatched shapes.
    #[error("usage error: {0}")]
    Usage(String),

    /// The simulation produced non-finite values.
    #[error("numeric failure at step {step}{context}: {message}")]
    Numeric {
        step: u64,
        context: String,
        message: String,
    },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(step: u64, msg: impl Into<String>) -> Self {
        Error::Numeric {
            step,
            context: String::new(),
            message: msg.into(),
        }
    }

    /// Attach replica / eps context to a numeric failure. Other variants pass through.
    pub fn with_context(self, ctx: impl AsRef<str>) -> Self {
        match self {
            Error::Numeric {
                step,
                context,
                message,
            } => Error::Numeric {
                step,
                context: format!("{context} ({})", ctx.as_ref()),
                message,
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Io { .. } => 1,
            Error::Numeric { .. } => 2,
        }
    }
}
