use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("constraint violated: {what} (residuals {residuals:?})")]
    Constraint { what: String, residuals: Vec<f64> },

    #[error("dimension {dim} exceeds budget {budget} (set PARASTAT_BUDGET_DIM to raise it)")]
    Resource { dim: usize, budget: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("outside the domain of convergence: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
