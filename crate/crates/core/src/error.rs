use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the support of the function it was given to.
    #[error("domain error: {what} = {value} ({reason})")]
    Domain {
        what: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty sample")]
    EmptySample,

    #[error("too few points: got {got}, need {need}")]
    TooFewPoints { got: usize, need: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("optimizer did not converge after {iterations} iterations (spread {spread:e}): {context}")]
    NonConvergence {
        iterations: usize,
        spread: f64,
        context: String,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain { what, value, reason }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Short machine-readable tag, used by the CLI for its error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EmptySample => "empty_sample",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }

    /// True for errors caused by the data or parameters rather than the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
