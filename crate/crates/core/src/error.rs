use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("domain has an empty interior")]
    EmptyInterior,

    #[error("domain has an empty exterior")]
    EmptyExterior,

    #[error("window `{0}` has no points in the exterior")]
    EmptyWindow(String),

    #[error("unknown window `{0}`")]
    UnknownWindow(String),

    #[error("operation requires the {expected} flavor")]
    FlavorMismatch { expected: &'static str },

    #[error("form is not coercive on the interior (margin {margin:.3e})")]
    NotCoercive { margin: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("support violation ({what}): offending indices {indices:?}")]
    SupportViolation { what: String, indices: Vec<usize> },

    #[error("positivity lost: {0}")]
    Positivity(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("motion is not compatible with the lattice: {0}")]
    IncompatibleMotion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
