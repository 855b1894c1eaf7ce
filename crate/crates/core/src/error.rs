use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("transform evaluated at a pole (s = {s})")]
    Pole { s: Complex64 },

    #[error("domain error: {0}")]
    Domain(&'static str),

    #[error("inversion at t = {t} did not converge: residual {residual:.3e} exceeds {tolerance:.3e}")]
    InversionDiverged { t: f64, residual: f64, tolerance: f64 },

    #[error("counting probability for n = {n} failed")]
    CountingFailed {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("inverted probability for n = {n} is {value:.3e}, outside the inversion noise floor")]
    ProbabilityOutOfRange { n: usize, value: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("simulation: {0}")]
    Simulation(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::InversionDiverged { .. } | Error::ProbabilityOutOfRange { .. } => true,
            Error::CountingFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
