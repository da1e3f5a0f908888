use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension cap exceeded: {m} x {d} exceeds {cap} elements")]
    DimensionCap { m: usize, d: usize, cap: usize },
    #[error("{0}")]
    Region(String),
    #[error("fit error: {0}")]
    Fit(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn region(msg: impl Into<String>) -> Error {
    Error::Region(msg.into())
}
