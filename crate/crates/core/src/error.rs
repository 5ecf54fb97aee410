use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("no kinematic solution: {0}")]
    NoSolution(&'static str),

    #[error("design violates the dimensionless constraints: {0}")]
    InfeasibleDesign(String),

    #[error("no valid initial pose found after {0} samples")]
    ResetFailed(usize),

    /// Broken internal contract; the run cannot continue.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
}
