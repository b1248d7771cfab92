use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("topology error: {0}")]
    Topology(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("degenerate edge ({0}, {1}): coincident node positions")]
    DegenerateEdge(usize, usize),
    #[error("newton solver failed at step {step}: residual norm {residual:e} after {iterations} iterations")]
    Solver {
        step: usize,
        residual: f64,
        iterations: usize,
    },
    #[error("rollout diverged at step {step}")]
    RolloutDivergence { step: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDivergence { epoch: usize, batch: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;
