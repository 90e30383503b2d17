use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("evaluation at s = {s} is within {tolerance:e} of pole {pole} (factor {factor})")]
    PoleProximity {
        factor: usize,
        pole: String,
        s: String,
        tolerance: f64,
    },

    #[error("integration step too large: {0}")]
    Integration(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("network is not connected: node `{0}` is unreachable")]
    Connectivity(String),

    #[error("singular network reduction: {0}")]
    SingularReduction(String),

    #[error("degenerate phase lock at node `{0}`: received signal is zero")]
    DegenerateLock(String),

    #[error(
        "eigenvector matrix is near-defective (condition number {condition:e} > {limit:e}); \
         perturb the network or inertia parameters slightly"
    )]
    NearDefective { condition: f64, limit: f64 },

    #[error("unsupported inertia dynamics: {0}")]
    UnsupportedDynamics(String),

    #[error("loop gain is singular at s = {s}: resonance of mode {mode}")]
    Resonance { mode: usize, s: String },

    #[error("config error: {0}")]
    Config(String),
}
