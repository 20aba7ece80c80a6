use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance is numerically singular (reciprocal condition {rcond:e})")]
    SingularCovariance { rcond: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("densities live on different grids")]
    GridMismatch,

    #[error("grid box does not cover the measure: {0}")]
    Coverage(String),

    #[error("density carries no state/data block structure")]
    MissingBlocks,

    #[error("datum outside the data box: {0}")]
    OutOfDomain(String),

    #[error("degenerate evidence: slice mass {0:e}")]
    DegenerateEvidence(f64),

    #[error("operator workspace was built for a different model")]
    WorkspaceMismatch,

    #[error("unknown map family '{0}'")]
    UnknownFamily(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model does not declare linear dynamics and observation maps")]
    NotLinear,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
