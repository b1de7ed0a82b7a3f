use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("invalid mode `{0}`")]
    InvalidMode(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state is not a valid density matrix: {0}")]
    InvalidState(String),

    #[error("operator dimension {found} does not match basis dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("hypergeometric series is degenerate: (c)_{k} vanishes before the series terminates")]
    DegenerateSeries { k: usize },

    #[error("integration unstable at t = {time}: {reason}")]
    Unstable { time: f64, reason: String },

    #[error("no stationary state within t = {horizon}: residual {residual:e}")]
    NotConverged { horizon: f64, residual: f64 },

    #[error("spectral gap {gap:e} is too small to separate the stationary manifold")]
    SmallGap { gap: f64 },

    #[error("subradiant states coincide (|alpha| = {alpha})")]
    CoincidentStates { alpha: f64 },

    #[error("covariance matrix is unphysical: min eigenvalue of sigma + i/2 Omega is {min_eigenvalue:e}")]
    Unphysical { min_eigenvalue: f64 },

    #[error("no thermal reference: {0}")]
    NotThermal(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
