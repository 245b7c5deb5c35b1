use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate Gram matrix: det = {det:.3e} is below the floor {floor:.3e}")]
    DegenerateGram { det: f64, floor: f64 },

    #[error("determinant certificate invalid: {0}")]
    CertificateInvalid(String),

    #[error("unstable time step: dt = {dt:.3e} exceeds h^2/2 = {limit:.3e}")]
    Instability { dt: f64, limit: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "Picard iteration is not contracting at t0 = {t0:.3e} \
         (q_n >= 1 for {consecutive} consecutive iterations); retry with a smaller t0"
    )]
    NoContraction { t0: f64, consecutive: usize },

    #[error("preset `{preset}` is infeasible: {reason}")]
    PresetInfeasible { preset: String, reason: String },

    #[error("manifest field `{field}`: expected {expected}")]
    Manifest { field: String, expected: String },

    #[error("inadmissible constraint: {0}")]
    Constraint(String),

    #[error("I/O failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn manifest(field: impl Into<String>, expected: impl Into<String>) -> Self {
        Error::Manifest { field: field.into(), expected: expected.into() }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Manifest { .. }
            | Error::Constraint(_)
            | Error::PresetInfeasible { .. }
            | Error::Parse { .. }
            | Error::Precondition(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
