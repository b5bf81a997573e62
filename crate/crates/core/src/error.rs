use thiserror::Error;

/// Errors raised by the modglue library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The constraint kernel at a block has a dimension that is not a
    /// multiple of the block size, so no module multiplicity can be read off.
    #[error("rank ambiguity at block {block}: kernel dimension {kernel_dim} not divisible by block size {block_dim} (smallest retained singular value {sigma_min:.3e}, largest dropped {sigma_dropped:.3e})")]
    RankAmbiguity {
        block: usize,
        kernel_dim: usize,
        block_dim: usize,
        sigma_min: f64,
        sigma_dropped: f64,
    },

    #[error("not a module map: right-action commutation residual {residual:.3e}")]
    NotAModuleMap { residual: f64 },

    #[error("not a morphism of gluing data: intertwining residual {residual:.3e} exceeds {tol:.3e}")]
    NotAMorphism { residual: f64, tol: f64 },

    #[error("cocycle condition violated: gluing is not surjective (total dimension deficit {deficit})")]
    CocycleViolated { deficit: usize },

    #[error("model violation: {what} (residual {residual:.3e})")]
    ModelViolation { what: String, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
