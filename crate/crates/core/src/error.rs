use thiserror::Error;

/// A physical or protocol quantity was outside the range a model accepts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{quantity} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error("{quantity} must not be negative, got {value}")]
    Negative { quantity: &'static str, value: f64 },
}

pub(crate) fn check_range(
    quantity: &'static str,
    value: f64,
    min: f64,
    max: f64,
) -> Result<f64, DomainError> {
    if value.is_finite() && (min..=max).contains(&value) {
        Ok(value)
    } else {
        Err(DomainError::OutOfRange {
            quantity,
            value,
            min,
            max,
        })
    }
}
