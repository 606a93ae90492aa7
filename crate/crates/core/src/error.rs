use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid velocity set: {0}")]
    InvalidVelocitySet(String),

    #[error("first-moment block has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("velocity index {index} out of range (largest index is {max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("moment matrix is singular (pivot {pivot:e} in column {column})")]
    SingularMomentMatrix { column: usize, pivot: f64 },

    #[error("non-positive density {0}")]
    NonPositiveDensity(f64),

    #[error("invalid equilibrium: {0}")]
    InvalidEquilibrium(String),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("relaxation rate s_{index} = {value} violates the stability bound 0 < s <= 2")]
    InvalidRelaxation { index: usize, value: f64 },

    #[error("invalid scheme parameters: {0}")]
    InvalidParameters(String),

    #[error("grid axis {axis} has {nodes} nodes, at least {min} are required")]
    GridTooCoarse { axis: usize, nodes: usize, min: usize },

    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: u64 },

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("invalid study: {0}")]
    InvalidStudy(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
