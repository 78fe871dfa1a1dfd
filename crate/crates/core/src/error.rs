use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument: shape mismatch, out-of-range parameter, empty input.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A matrix that should be positive definite could not be factorized.
    #[error("factorization of {what} ({size}x{size}) failed; {condition}")]
    Factorization {
        what: String,
        size: usize,
        condition: String,
    },

    /// Other numerical failure (non-finite values, integrator breakdown).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed configuration file or flag.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// An error annotated with the pipeline stage that produced it.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for configuration and argument errors (CLI exit code 1).
    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_) | Error::Argument(_))
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
