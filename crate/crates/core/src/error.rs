use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input at `{field}`: {message}")]
    Spec { field: String, message: String },
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("function undefined at vertex `{0}`")]
    Undefined(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("region too small: {0}")]
    RegionTooSmall(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("too large: {0}")]
    TooLarge(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn spec(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec { field: field.into(), message: message.into() }
    }

    /// Stable machine-readable kind, used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Spec { .. } => "spec",
            Error::UnknownVertex(_) => "unknown-vertex",
            Error::Undefined(_) => "undefined",
            Error::Singular(_) => "singular",
            Error::RegionTooSmall(_) => "region-too-small",
            Error::NotConverged(_) => "not-converged",
            Error::Invalid(_) => "invalid-argument",
            Error::Solver(_) => "solver",
            Error::TooLarge(_) => "too-large",
            Error::InvalidPotential(_) => "invalid-potential",
            Error::Io(_) => "io",
        }
    }

    /// The offending spec field, when the error concerns one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Spec { field, .. } => Some(field),
            _ => None,
        }
    }
}
