use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite field values in impulse column {column} of the {channel} block")]
    NonFinite {
        column: usize,
        channel: &'static str,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("decomposition inconsistent: {name} residual {residual:e} exceeds {tolerance:e}")]
    DecompositionInconsistent {
        name: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors raised by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NumericalFailure(_)
                | Error::DecompositionInconsistent { .. }
                | Error::UndefinedStatistic(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
