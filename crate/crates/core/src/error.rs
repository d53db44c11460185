use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step-size condition `{name}` violated at k={k}: {lhs:e} > {rhs:e}")]
    ScheduleViolation {
        name: String,
        k: u64,
        lhs: f64,
        rhs: f64,
    },

    #[error("singular system in {0}")]
    Singular(String),

    #[error("divergence at iteration {k} (seed {seed}): {what} norm {norm:e} exceeds cap {cap:e}")]
    Divergence {
        k: u64,
        seed: u64,
        what: &'static str,
        norm: f64,
        cap: f64,
    },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("coupled-inequality conditions unmet: {0}")]
    CoupledPrecondition(String),

    #[error(
        "policy-induced chain has no unique stationary distribution \
         (unique-stationary-distribution assumption violated): {0}"
    )]
    NoUniqueStationary(String),

    #[error("insufficient points for slope fit: {usable} usable, need at least {needed}")]
    InsufficientPoints { usable: usize, needed: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
