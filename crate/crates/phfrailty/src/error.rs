use thiserror::Error;

/// Errors surfaced by model construction, evaluation, and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid model parameters: {0}")]
    Validation(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(
        "ambiguous Jordan structure near eigenvalue {eigenvalue}: candidate block sizes {candidates:?}"
    )]
    EigenAmbiguity {
        eigenvalue: f64,
        candidates: Vec<usize>,
    },

    #[error("state {state} receives no mass in the weighted EM update")]
    StateStarvation { state: usize },

    #[error("failed to bracket the quadrature truncation point within {0} doublings")]
    Truncation(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
