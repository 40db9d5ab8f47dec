use thiserror::Error;

/// Errors raised by field operations, solvers and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("expected dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("field has nonzero mean (|mean| = {0:e})")]
    NonZeroMean(f64),

    #[error("field is not divergence free (max |div| = {0:e})")]
    NotDivergenceFree(f64),

    #[error("unknown field recipe `{0}`")]
    UnknownRecipe(String),

    #[error("CFL guard tripped: dt*max|v|*kmax = {0:.4} > 1")]
    Cfl(f64),

    #[error("input outside the principal branch: {0}")]
    Branch(String),

    #[error("matrix is not antisymmetric (defect {0:e})")]
    NotAntisymmetric(f64),

    #[error("axis field is not unit length (max defect {0:e})")]
    NotUnit(f64),

    #[error("{flagged} of {total} paths flagged for gradient blow-up (budget 1%)")]
    FlaggedPaths { flagged: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
