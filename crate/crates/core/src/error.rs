use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation requires the {expected} delay model")]
    WrongVariant { expected: &'static str },

    #[error("invalid order-statistic query: k={k}, n={n}, beta={beta}")]
    InvalidQuery { k: usize, n: usize, beta: f64 },

    #[error("target error {target} is not reachable (best floor {floor})")]
    Unreachable { target: f64, floor: f64 },

    #[error("no feasible batch scale when moving to k={k_next}")]
    Infeasible { k_next: usize },

    #[error("reference error {e_ref} lies below the stage floor {floor}")]
    BelowFloor { e_ref: f64, floor: f64 },

    #[error("run diverged at iteration {iteration}: error {error}")]
    Diverged { iteration: u64, error: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
