use thiserror::Error;

/// Errors produced by the engine and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point {index} at ({x}, {y}, {z}) lies outside the domain [-1,1]^3")]
    Domain { index: usize, x: f64, y: f64, z: f64 },

    #[error("state error: {0}")]
    State(String),

    #[error("non-finite value produced in stage `{stage}` at step {step}")]
    NonFinite { stage: &'static str, step: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
