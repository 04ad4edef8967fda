use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A time or half-log-SNR value outside the usable range of a schedule.
    #[error("{what} = {value} outside domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported order: {0}")]
    Range(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A state or model output contained NaN or infinity.
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },

    #[error("reference solution: {0}")]
    Reference(String),

    #[error("order fit: {0}")]
    Fit(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::Singular(_) | Error::Reference(_) | Error::Fit(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
