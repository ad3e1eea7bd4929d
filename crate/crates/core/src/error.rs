use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid mixture: {0}")]
    InvalidGmm(String),

    #[error("brute-force enumeration limited to k <= {max}, got k = {k}")]
    TooLarge { k: usize, max: usize },

    #[error("masked weights sum to {sum:e}, cannot normalize")]
    DegenerateWeights { sum: f64 },

    #[error("epsilon = {epsilon} must be below ln(2)/3 = {limit:.6}")]
    EpsilonTooLarge { epsilon: f64, limit: f64 },

    #[error("no noise level satisfies both privacy and concentration: {0}")]
    Infeasible(String),

    #[error("failure threshold {threshold:.5} exceeds 1, the agreement test can never pass")]
    ConfigInfeasible { threshold: f64 },

    #[error("agreement test passed but no chunk output has q > 0.6")]
    SelectionFailed,

    #[error("insufficient data: {have} points, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("learner failed: {0}")]
    LearnFailed(String),

    #[error("pair distance {distance:e} exceeds gamma = {gamma:e}")]
    PreconditionDistance { distance: f64, gamma: f64 },

    #[error("triple sampler starved: {accepted} accepted out of {attempted} proposals")]
    SamplerStarved { accepted: usize, attempted: usize },

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
