use thiserror::Error;

/// Errors produced by the solver, the metrics and the experiment runner.
///
/// Variants are grouped so that callers (notably the CLI) can map them onto
/// "bad input" versus "numerical failure" exit statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty ensemble: {0}")]
    EmptyEnsemble(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("transport problem too large: {0} atoms (limit {1})")]
    TooLarge(usize, usize),

    #[error("non-finite value at particle {index}: {what}")]
    NonFinite { index: usize, what: String },

    #[error("step size underflow at t = {time} (dt = {dt})")]
    StepUnderflow { time: f64, dt: f64 },

    #[error("run stopped at t = {time} before reaching t = {target}: {reason}")]
    Incomplete { time: f64, target: f64, reason: String },

    #[error("transport solver failed: {0}")]
    Transport(String),

    #[error("run failed at h = {h}: {source}")]
    SweepPoint {
        h: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the user's input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::Parse(_)
            | Error::GridMismatch(_)
            | Error::EmptyEnsemble(_) => true,
            Error::SweepPoint { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
