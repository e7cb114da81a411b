use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(
        "infeasible schedule: grid {grid} slot {slot}: awake capacity \
         {awake_cap_gb} GB cannot carry traffic {traffic_gb} GB"
    )]
    InfeasibleSchedule {
        grid: u32,
        slot: usize,
        awake_cap_gb: f64,
        traffic_gb: f64,
    },

    #[error("dispatch infeasible at slot {slot}: {reason}")]
    DispatchInfeasible { slot: usize, reason: String },

    #[error("training diverged at step {step}: {detail}")]
    TrainingDiverged { step: usize, detail: String },

    #[error("undefined LCCA: annual carbon abatement must be positive, got {0}")]
    UndefinedLcca(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
