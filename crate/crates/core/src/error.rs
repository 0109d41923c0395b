use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid increment law: {0}")]
    InvalidLaw(String),
    #[error("increment law is periodic (support differences do not generate Z^d); pass allow_periodic to override")]
    NotAperiodic,
    #[error("no regime applies: {0}")]
    RegimeUndetermined(String),
    #[error("singular covariance (det = {0})")]
    SingularCovariance(f64),
    #[error("convolution too large: k = {k}, grid cells = {cells}")]
    ConvolutionTooLarge { k: usize, cells: u128 },
    #[error("walk is not transient")]
    NotTransient,
    #[error("series did not converge: {0}")]
    NoConvergence(String),
    #[error("lattice coordinate out of range")]
    CoordinateOverflow,
    #[error("grid `{0}` must be sorted and lie in [0, 1]")]
    GridUnsorted(&'static str),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("missing parameter: {0}")]
    MissingParameter(&'static str),
    #[error("characteristic-function fit diverged: {0}")]
    FitDiverged(String),
    #[error("missing boundary: {0}")]
    MissingBoundary(String),
    #[error("sequence too short: need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("missing quantiles: {0}")]
    MissingQuantiles(String),
    #[error("kernel measure not representable: {0}")]
    MeasureNotRepresentable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
