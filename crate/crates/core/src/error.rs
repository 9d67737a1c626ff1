use thiserror::Error;

/// Errors produced anywhere in the laboratory.
///
/// The variants map onto the CLI exit codes: parameter problems exit with 2,
/// numerical failures with 3 and consistency violations with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("ordering violated: {0}")]
    Ordering(String),

    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("formula domain error: {0}")]
    FormulaDomain(String),

    #[error("unresolvable geometry: {0}")]
    Unresolvable(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("iteration budget exhausted after {iterations} iterations ({converged} of {requested} pairs converged)")]
    Budget {
        iterations: usize,
        converged: usize,
        requested: usize,
    },

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Ordering(_)
            | Error::Geometry(_)
            | Error::FormulaDomain(_)
            | Error::Unresolvable(_)
            | Error::Parse(_) => 2,
            Error::Consistency(_) => 4,
            Error::Structure(_)
            | Error::Breakdown(_)
            | Error::Budget { .. }
            | Error::Io(_)
            | Error::Json(_) => 3,
        }
    }
}
