use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown POI `{0}`")]
    UnknownPoi(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("unknown POIs: {}", .0.join(", "))]
    UnknownPois(Vec<String>),

    #[error("no-visit POI `{0}`")]
    NoVisitPoi(String),

    #[error("no feasible trip")]
    NoFeasibleTrip,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
