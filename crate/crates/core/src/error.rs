use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration refused: n = {n} exceeds the cap of {cap}")]
    AboveCap { n: usize, cap: usize },

    #[error("conditional probability undefined: {0}")]
    UndefinedConditional(String),

    #[error("estimate undefined: {0}")]
    UndefinedEstimate(String),

    #[error("step budget of {budget} exhausted before reaching {target}")]
    BudgetExhausted { budget: u64, target: String },

    #[error(
        "good-set precondition fails: measured delta_S = {delta_s:.4}, delta_T = {delta_t:.4}, required <= {delta:.4}"
    )]
    GoodSetPrecondition { delta_s: f64, delta_t: f64, delta: f64 },

    #[error("malformed edge list at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
