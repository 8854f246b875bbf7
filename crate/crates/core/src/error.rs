use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("model returned a non-finite value when perturbing argument {index}")]
    NonFinite { index: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("pseudo orders Ly={ly}, Lu={lu} are below the model orders ny+1={ny1}, nu+1={nu1}")]
    UnsupportedOrders {
        ly: usize,
        lu: usize,
        ny1: usize,
        nu1: usize,
    },

    #[error("model does not declare its true orders (ny, nu)")]
    UnknownOrders,

    #[error("rank deficient input block: rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("infeasible box constraint: {0}")]
    InfeasibleBox(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("closed loop is not stable (max |root| = {max_root})")]
    Unstable { max_root: f64 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("closed-loop determinant is identically zero")]
    DegenerateLoop,

    #[error("analysis requires a uniform weighting (lambda * I)")]
    NonUniformWeighting,

    #[error("not a valid rotation matrix (orthonormality error {0:e})")]
    InvalidRotation(f64),

    #[error("degenerate path direction: start and goal positions coincide")]
    DegenerateDirection,

    #[error("plant output diverged at k={k} (|y| = {magnitude:e})")]
    Diverged { k: i64, magnitude: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
