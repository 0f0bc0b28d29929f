//! Error taxonomy shared by the library and the CLI.
//!
//! The CLI maps these onto process exit codes: config parse failures → 2,
//! hypothesis violations → 3, solver aborts → 4.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// A requested constant does not exist (e.g. the wave-limit coupling
    /// constant in two transverse dimensions, where the defining integral
    /// diverges logarithmically).
    #[error("divergent constant: {0}")]
    DivergentConstant(String),

    #[error("missing history: {0}")]
    MissingHistory(String),

    #[error("kernel table too short: {0}")]
    TableTooShort(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("undefined distance: {0}")]
    UndefinedDistance(String),

    #[error("config error: {0}")]
    Config(String),

    /// A standing-assumption check failed during config validation.
    /// `tag` names the violated hypothesis (e.g. "H7").
    #[error("hypothesis violation ({tag}): {msg}")]
    Hypothesis { tag: &'static str, msg: String },

    #[error("solver abort: {0}")]
    SolverAbort(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI should report for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 2,
            Error::Hypothesis { .. } => 3,
            Error::SolverAbort(_) => 4,
            _ => 4,
        }
    }
}
