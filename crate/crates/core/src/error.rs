use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree mismatch: grid has L = {grid}, input has L = {input}")]
    DegreeMismatch { grid: usize, input: usize },

    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("immersion regularity lost at node {node}: det γ = {det:e}")]
    Degenerate { node: usize, det: f64 },

    #[error("matrix at node {node} is not symmetric positive definite")]
    NotSpd { node: usize },

    #[error("Liouville Newton did not converge in {iterations} iterations (residual {residual:e})")]
    LiouvilleNoConvergence { iterations: usize, residual: f64 },

    #[error("gauge projection failed: {0}")]
    Gauge(String),

    #[error("multiplicative blend needs H > 0, found H = {value:e} at node {node}")]
    NonPositiveMeanCurvature { node: usize, value: f64 },

    #[error("epsilon {0} outside the admissible range")]
    InvalidEpsilon(f64),

    #[error("covector must be nonzero")]
    ZeroCovector,

    #[error("SVD failed: {0}")]
    Svd(String),

    #[error("expected 6 independent ambient Killing modes, found rank {rank}")]
    KillingRank { rank: usize },

    #[error("Newton exceeded {iterations} iterations (residual {residual:e})")]
    NewtonMaxIter { iterations: usize, residual: f64 },

    #[error("Newton stalled after {iterations} iterations (residual {residual:e})")]
    NewtonStalled { iterations: usize, residual: f64 },

    #[error("Newton diverged after {iterations} iterations: {reason}")]
    NewtonDiverged { iterations: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegreeMismatch { .. } => "degree_mismatch",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::Degenerate { .. } => "degenerate_immersion",
            Error::NotSpd { .. } => "not_spd",
            Error::LiouvilleNoConvergence { .. } => "liouville_no_convergence",
            Error::Gauge(_) => "gauge_projection",
            Error::NonPositiveMeanCurvature { .. } => "nonpositive_mean_curvature",
            Error::InvalidEpsilon(_) => "invalid_epsilon",
            Error::ZeroCovector => "zero_covector",
            Error::Svd(_) => "svd_failure",
            Error::KillingRank { .. } => "killing_rank",
            Error::NewtonMaxIter { .. } => "newton_max_iter",
            Error::NewtonStalled { .. } => "newton_stalled",
            Error::NewtonDiverged { .. } => "newton_diverged",
            Error::Parse(_) => "parse",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
