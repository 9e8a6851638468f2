use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("context too short: kernel needs {needed} symbols, got {got}")]
    ContextTooShort { needed: usize, got: usize },

    #[error("trajectory too short: need more than {needed} symbols, got {got}")]
    TrajectoryTooShort { needed: usize, got: usize },

    #[error("only {found} returns of the initial string found, {needed} required")]
    InsufficientReturns { found: usize, needed: usize },

    #[error("empty block list")]
    EmptyBlocks,

    #[error("empty sample")]
    EmptySample,

    /// Every excursion block has the same centered sum under the observable.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("power iteration did not converge within {iterations} iterations (L1 gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("context table of {contexts} rows exceeds the cap of {cap}")]
    ContextCapExceeded { contexts: u64, cap: u64 },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("context {context} was never observed in the estimation trajectory")]
    UnobservedContext { context: usize },

    #[error("block count e^(alpha k) = {value:e} overflows 2^53")]
    ScheduleOverflow { value: f64 },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("identity check failed: {0}")]
    IdentityViolation(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Degenerate(_) | Error::IdentityViolation(_) => 2,
            Error::ResourceCap(_) | Error::ContextCapExceeded { .. } | Error::ScheduleOverflow { .. } => 3,
            _ => 1,
        }
    }
}
