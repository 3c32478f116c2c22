use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A value failed validation against its declared invariants.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A caller violated an operation's contract (precondition).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The requested epsilon does not fit in the capacity region.
    #[error("infeasible epsilon {epsilon}: {reason}")]
    InfeasibleEpsilon { epsilon: f64, reason: String },

    /// A computed period exceeded the configured cap.
    #[error("period overflow: T0 would exceed cap {cap} ({reason})")]
    PeriodOverflow { cap: u64, reason: String },

    /// The arrival family admits no analytic concentration bound.
    #[error("no analytic concentration bound for this arrival family; supply T0 explicitly")]
    NoConcentrationBound,

    /// A simulation aborted mid-run.
    #[error("run aborted at slot {slot}: {cause}")]
    RunAborted { slot: u64, cause: String },

    /// Config parsing / validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code per the CLI contract: 1 for validation errors,
    /// 2 for runtime contract violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) | Error::RunAborted { .. } => 2,
            _ => 1,
        }
    }
}
