use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps these onto its stable exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("solver failed: {message} (residual {residual:.3e})")]
    Solver { message: String, residual: f64 },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("decision not interior to the decision box: {0}")]
    NonInterior(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("threshold lies in the uncovered intermediate region: {0}")]
    Region(String),

    #[error("experiment quality check failed: {0}")]
    Experiment(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn solver(message: impl Into<String>, residual: f64) -> Self {
        Error::Solver {
            message: message.into(),
            residual,
        }
    }

    /// Process exit code: 2 config, 3 solver, 4 experiment quality, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Invalid(_) => 2,
            Error::Solver { .. }
            | Error::Conditioning(_)
            | Error::NonInterior(_)
            | Error::Domain(_)
            | Error::NotImplemented(_)
            | Error::Precondition(_) => 3,
            Error::Experiment(_) => 4,
            Error::Region(_) => 0,
            Error::Io(_) => 1,
        }
    }
}
