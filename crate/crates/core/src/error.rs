use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("field does not match domain: expected {expected} points, found {found}")]
    DomainMismatch { expected: usize, found: usize },
    #[error("axis index {axis} out of range for complex dimension {n}")]
    AxisOutOfRange { axis: usize, n: usize },
    #[error("density is not real: max imaginary part {0:e}")]
    NonRealDensity(f64),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("matrix not positive definite at point {point}: smallest eigenvalue {eigenvalue:e}")]
    NotPositive { point: usize, eigenvalue: f64 },
    #[error("curvature symmetrization defect {defect:e} exceeds {limit:e} (under-resolved)")]
    Underresolved { defect: f64, limit: f64 },
    #[error("non-positive determinant {det:e} at point {point}")]
    NonPositiveDeterminant { point: usize, det: f64 },
    #[error("theta(0, h0) is not dual-Nakano positive (margin {margin:e}); alpha must be at least {required_alpha}")]
    AlphaTooSmall { margin: f64, required_alpha: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("singular principal symbol")]
    SingularSymbol,
    #[error("Newton failed: {reason} (residual history {history:?})")]
    NewtonFailed { reason: String, history: Vec<f64> },
    #[error("normalization violated: {0}")]
    Normalization(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
