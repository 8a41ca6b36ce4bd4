//! Error types shared across the crate.

/// Crate-wide error type.
///
/// Validation-style variants (rejected configuration) are distinguished from
/// runtime failures via [`Error::is_validation`], which the CLI maps to
/// distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "critical load violated: sum of rho_i = {sum:.17} differs from 1 by more than {tol:e}"
    )]
    CriticalLoadViolation { sum: f64, tol: f64 },

    #[error("{name}[{index}] must be strictly positive, got {value}")]
    NonPositiveRate {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{name}[{index}] = {value} must exceed {bound}")]
    ParameterOutOfRange {
        name: &'static str,
        index: usize,
        value: f64,
        bound: f64,
    },

    #[error("divergence exponent pbar = {pbar} must be at least the cost exponent p = {p}")]
    ExponentOrderViolation { pbar: f64, p: f64 },

    #[error("scaled rate {name}[{index}] = {value} is non-positive at n = {n}")]
    RateUnderflow {
        name: &'static str,
        index: usize,
        n: u64,
        value: f64,
    },

    #[error("intensity for stream {stream} is non-positive: {value}")]
    NonPositiveIntensity { stream: String, value: f64 },

    #[error("event count exceeded the cap of {cap} before the horizon was reached")]
    HorizonOverflow { cap: u64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("line {line}: {source}")]
    WithLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid study: {message}")]
    InvalidStudy { message: String },

    #[error("invalid parameter: {message}")]
    InvalidParameter { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a configuration-file line number to an error.
    pub fn at_line(self, line: usize) -> Self {
        Error::WithLine {
            line,
            source: Box::new(self),
        }
    }

    /// True for errors caused by rejected input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::CriticalLoadViolation { .. }
            | Error::NonPositiveRate { .. }
            | Error::ParameterOutOfRange { .. }
            | Error::ExponentOrderViolation { .. }
            | Error::RateUnderflow { .. }
            | Error::Parse { .. }
            | Error::InvalidStudy { .. }
            | Error::InvalidParameter { .. } => true,
            Error::WithLine { source, .. } => source.is_validation(),
            Error::NonPositiveIntensity { .. } | Error::HorizonOverflow { .. } | Error::Io(_) => {
                false
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
