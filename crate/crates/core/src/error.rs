use std::path::PathBuf;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A draw whose Gaussian cdf value rounds to 0 or 1, which makes the
    /// Anderson-Darling weight infinite.
    #[error("degenerate tail: draw {value} at position {index} has Phi-value 0 or 1")]
    DegenerateTail { index: usize, value: f64 },

    #[error("weight matrix is not positive definite")]
    SingularOmega,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no reference table for `{0}`")]
    MissingReferenceTable(String),

    #[error("empty conditioning set: no replication satisfied the diagnostic threshold")]
    EmptyConditioning,

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// `2` configuration, `3` degenerate data, `4` I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::InvalidArgument(_)
            | Error::SingularOmega
            | Error::MissingReferenceTable(_)
            | Error::Config { .. } => 2,
            Error::InvalidSample(_)
            | Error::DegenerateTail { .. }
            | Error::DegenerateFit(_)
            | Error::EmptyConditioning => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
