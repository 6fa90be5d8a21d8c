use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid of {grid} points is too small for cutoff {cutoff} (need at least {min})")]
    GridTooSmall { grid: usize, cutoff: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field is not real-valued: {0}")]
    NotRealValued(String),

    #[error("Hill potential has nonzero odd Fourier mode n = {0}; it must be π-periodic")]
    OddModes(i64),

    #[error("divergent Gibbs weight (log-weight {log_weight:e})")]
    DivergentWeight { log_weight: f64 },

    #[error("no sample accepted after {attempts} attempts")]
    NoAcceptance { attempts: u64 },

    #[error("non-finite transfer matrix at λ = {re} + {im}i")]
    NonFiniteMonodromy { re: f64, im: f64 },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("contour placement rejected: {0}")]
    ContourRejected(String),

    #[error("need {needed} spectral points around λ = 0, only {available} available")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("symmetric eigen-solve failed: {0}")]
    EigenSolve(String),

    #[error("Hessian quadratic form is negative: {0:e}")]
    NegativeForm(f64),

    #[error("fields coincide; difference quotient undefined")]
    IdenticalFields,

    #[error("blow-up detected: {0}")]
    BlowUp(String),

    #[error("{failed} of {total} ensemble members failed (cap is 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
