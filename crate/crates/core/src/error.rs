use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field failed validation.
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// The caller broke the trial protocol (wrong dose, wrong cohort size).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The operation is not valid in the trial's current state.
    #[error("state error: {0}")]
    State(String),

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
