use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented invariant.
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    /// A configuration, task or model file failed validation.
    #[error("configuration error in {source_name}: {message}")]
    Config { source_name: String, message: String },

    /// The simulation produced non-finite values or hit a forbidden collision.
    #[error("simulation fault: {0}")]
    Fault(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { what: what.into(), reason: reason.into() }
    }

    pub fn config(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { source_name: source_name.into(), message: message.into() }
    }

    /// True for errors caused by user-provided inputs rather than runtime faults.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid { .. } | Error::Config { .. } | Error::Checkpoint(_))
    }
}
