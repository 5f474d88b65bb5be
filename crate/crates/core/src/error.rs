use thiserror::Error;

/// Errors raised by the library. The CLI maps the input-class variants to
/// exit code 2 and the numerical ones to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("ambiguous input: {0}")]
    Ambiguous(String),
    #[error("integration did not reach tolerance: estimate {estimate:e}, error bound {error:e}")]
    IntegrationAccuracy { estimate: f64, error: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("unidentifiable parameters: {0}")]
    Unidentifiable(String),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::InvalidInput(_) | Error::InsufficientData(_) | Error::Ambiguous(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
