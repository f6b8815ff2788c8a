use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("matrix is not invertible modulo {q}")]
    NotInvertible { q: u64 },
    #[error("matrix does not have determinant 1 modulo {q}")]
    NotSpecialLinear { q: u64 },
    #[error("matrix is not primitive modulo {q}")]
    NotPrimitive { q: u64 },
    #[error("enumeration of {count} items exceeds cap {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },
    #[error("integer overflow in exact arithmetic")]
    ArithmeticOverflow,
    #[error("dimension {0} is too large for this routine")]
    DimensionTooLarge(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn pre(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
