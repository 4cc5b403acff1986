use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("degenerate geometry: points only {distance:e} m apart")]
    DegenerateGeometry { distance: f64 },
    #[error("pulse at delay {delay:e} s does not fit the observation window")]
    PulseOutsideWindow { delay: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
