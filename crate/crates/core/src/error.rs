use thiserror::Error;

/// Errors produced anywhere in the detection and solution pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed system document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("system must have at least one variable")]
    EmptySystem,

    #[error("system dimension {n} exceeds the supported maximum {max}")]
    TooLarge { n: usize, max: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry in {what}")]
    NonFinite { what: String },

    #[error("eigen-solver failed: {0}")]
    EigenSolver(String),

    #[error("point lies on the hypersurface x^T B x = 0")]
    OnHypersurface,

    #[error("closed-form solution blows up in t ∈ [{t_lo}, {t_hi}]")]
    Blowup { t_lo: f64, t_hi: f64 },

    #[error("matrix exponential overflowed (norm {norm:e})")]
    Overflow { norm: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("B is not an eigenmatrix of V (residual {residual:e})")]
    NotEigenmatrix { residual: f64 },

    #[error("invalid integration config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
