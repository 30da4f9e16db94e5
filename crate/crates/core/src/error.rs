use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("matrix is numerically rank deficient")]
    RankDeficient,
    #[error("matrix has no entry above the absolute threshold")]
    ZeroMatrix,
    #[error("matrix is not symmetric to working tolerance")]
    NotSymmetric,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("loading matrix does not have full column rank")]
    NotFullColumnRank,
    #[error("projected data A·X is rank deficient")]
    RankDeficientProjection,
    #[error("projected data A·X is numerically zero")]
    ZeroProjection,
    #[error("data matrix is flagged mean-centred but column {col} sums to {sum:e}")]
    NotMeanCentered { col: usize, sum: f64 },
    #[error("line search failed after {trials} trials")]
    LineSearchFailed { trials: usize },
    #[error("direction is not an ascent direction (slope {slope:e})")]
    NotAscentDirection { slope: f64 },
    #[error("extrapolation system is singular")]
    SingularSystem,
    #[error("spectrum is empty")]
    EmptySpectrum,
    #[error("multiplicity profile sums to {sum}, expected p = {p}")]
    ProfileSumMismatch { sum: usize, p: usize },
    #[error("geometric and gradient stationarity tests disagree (gradient norm {grad_norm:e})")]
    InconsistentStationarityTests { grad_norm: f64 },
    #[error("point is not a saddle: {0}")]
    NotASaddle(String),
    #[error("matrix columns are not orthonormal (error {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid spectrum model parameters: {0}")]
    InvalidModelParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
