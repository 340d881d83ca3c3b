use thiserror::Error;

/// Errors raised by the numeric kernels (dynamics, user model, rl).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid input: {name} = {value} is not finite")]
    NonFinite { name: &'static str, value: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl ModelError {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        ModelError::Precondition(msg.into())
    }
}

/// Rejects NaN and infinities, naming the offending argument.
pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { name, value })
    }
}
