use thiserror::Error;

/// Errors raised across the simulator and the lattice model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("digit {digit} out of range for qudit {qudit} of dimension {dim}")]
    DigitOutOfRange { qudit: usize, digit: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("Gauss law violated: {0}")]
    GaussViolation(String),

    #[error("all {shots} trajectories discarded by the norm guard (first discard at step {first_step})")]
    AllTrajectoriesDiscarded { shots: usize, first_step: usize },

    #[error("density matrix trace collapsed to {trace:e} at step {step}")]
    TraceCollapse { step: usize, trace: f64 },

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
