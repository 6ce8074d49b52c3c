use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {what} must satisfy {requirement}, got {value}")]
    Domain {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("integrand evaluated to NaN at abscissa {abscissa}")]
    Evaluation { abscissa: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("extension undefined: the moment of psi is infinite and the measure has mass {mass} at 0")]
    UndefinedExtension { mass: f64 },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
