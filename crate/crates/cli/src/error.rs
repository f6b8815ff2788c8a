use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("golden mismatch:\n{0}")]
    GoldenMismatch(String),
    #[error(transparent)]
    Core(#[from] horo_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record error: {0}")]
    Record(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Errors that mean the request cannot be carried out at this size or shape.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            CliError::Core(horo_core::Error::EnumerationTooLarge { .. } | horo_core::Error::DimensionTooLarge(_))
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::ConfigInvalid(msg.into())
}
