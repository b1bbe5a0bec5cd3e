use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate state id {0}")]
    DuplicateState(u32),
    #[error("edge ({0}, {1}) references an unknown state")]
    UnknownEdgeEndpoint(u32, u32),
    #[error("self-loop edge at state {0}")]
    SelfLoop(u32),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),
    #[error("unknown state {0}")]
    UnknownState(usize),
    #[error("unknown state id {0}")]
    UnknownStateId(u32),
    #[error("invalid kernel at state {state}, action {action}: {reason}")]
    InvalidKernel {
        state: usize,
        action: usize,
        reason: String,
    },
    #[error("reward {value} at state {state}, action {action} exceeds r_max = {r_max}")]
    RewardOutOfBounds {
        state: usize,
        action: usize,
        value: f64,
        r_max: f64,
    },
    #[error("invalid probability vector: {0}")]
    InvalidPmf(String),
    #[error("incompatible distributions: {0}")]
    Incompatible(String),
    #[error("enumeration cap exceeded: {what} has size {size}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        size: u128,
        cap: u128,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input is not a multinomial lift: {0}")]
    NotALift(String),
    #[error("state {0} has zero occupancy")]
    ZeroOccupancy(usize),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("run directory {0} is locked by another process")]
    Locked(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
