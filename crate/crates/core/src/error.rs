use std::path::PathBuf;

use thiserror::Error;

/// Which side of the storage envelope a decision violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// SoC would drop below zero.
    EmptyStorage,
    /// SoC would exceed capacity.
    FullStorage,
    /// Discharge or charge exceeds the per-step power limit.
    PowerLimit,
    /// Discharge requested at a negative price.
    NegativePriceDischarge,
    /// Both discharge and charge are nonzero.
    SimultaneousAction,
    /// A negative or non-finite energy quantity.
    NegativeEnergy,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Bound::EmptyStorage => "state of charge below zero",
            Bound::FullStorage => "state of charge above capacity",
            Bound::PowerLimit => "power limit per step",
            Bound::NegativePriceDischarge => "discharge at negative price",
            Bound::SimultaneousAction => "simultaneous charge and discharge",
            Bound::NegativeEnergy => "negative or non-finite energy",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible decision: {bound} ({detail})")]
    Infeasible { bound: Bound, detail: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state of charge {soc} outside [0, {capacity}]")]
    SocOutOfRange { soc: f64, capacity: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("calibration target R^2={target} unreachable; achieved bracket [{low}, {high}]")]
    Calibration { target: f64, low: f64, high: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: timestamp not after previous row")]
    Ordering { path: PathBuf, line: usize },

    #[error("{path}:{line}: gap of {gap_seconds}s exceeds twice the modal interval ({modal_seconds}s)")]
    Gap {
        path: PathBuf,
        line: usize,
        gap_seconds: i64,
        modal_seconds: i64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("run metadata mismatch: {0}")]
    Mismatch(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code used by the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::Mismatch(_) => 2,
            Error::Parse { .. }
            | Error::Ordering { .. }
            | Error::Gap { .. }
            | Error::EmptyInput(_)
            | Error::LengthMismatch { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::AtStep { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}
