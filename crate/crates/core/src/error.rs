use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "trajectory diverged at step {step}: state magnitude {magnitude:e} exceeds cap {cap:e}"
    )]
    Divergence {
        step: usize,
        magnitude: f64,
        cap: f64,
    },

    #[error(
        "spectral radius {rho:.6} is not below 1 - 1e-9; infinite-horizon sum does not converge (use a finite horizon)"
    )]
    Unstable { rho: f64 },

    #[error("model has no input operator K_u")]
    MissingInputOperator,

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("snapshot matrix is identically zero")]
    ZeroSnapshots,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dictionary would have {entries} entries, above the limit of {limit}")]
    TooLarge { entries: usize, limit: usize },

    #[error("matrix is not positive semidefinite: lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e}")]
    NotPsd { lambda_min: f64, lambda_max: f64 },

    #[error("Stein iteration did not converge after {iterations} iterations (spectral radius estimate {rho:.6})")]
    SteinNonConvergence { iterations: usize, rho: f64 },

    #[error("controllability gramian is numerically zero")]
    ZeroGramian,

    #[error("{path}: line {line}: {message}")]
    Format {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}
