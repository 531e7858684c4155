use thiserror::Error;

/// Errors raised by the forward and inverse solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("direction {theta} is evanescent: |(k+/k-) cos(theta)| = {ratio} > 1")]
    Evanescent { theta: f64, ratio: f64 },

    #[error("angle {theta} outside the aperture [{lo}, {hi}]")]
    Aperture { theta: f64, lo: f64, hi: f64 },

    #[error("kernel evaluated at coincident points")]
    SingularPoint,

    #[error("quadrature did not converge: achieved relative accuracy {achieved:e}")]
    Accuracy { achieved: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("obstacle must lie strictly below the interface: {0}")]
    Domain(String),

    #[error("boundary integral system is singular")]
    SingularSystem,

    #[error("data layout mismatch: {0}")]
    Layout(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
