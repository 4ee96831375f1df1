//! Exit-code policy: 0 success, 1 validation failure, 2 runtime or numeric
//! failure, 3 I/O failure.

use fxtf_core::checkpoint::CheckpointError;
use fxtf_core::curve::CurveError;
use fxtf_core::eval::EvalError;
use fxtf_core::train::TrainError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numeric(m) => write!(f, "runtime failure: {m}"),
            CliError::Io(m) => write!(f, "I/O failure: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::InvalidConfig(_) => CliError::Validation(e.to_string()),
            CurveError::Factorization(_) => CliError::Numeric(e.to_string()),
            CurveError::Io(_) | CurveError::Parse { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::ContextTooLong { .. } => {
                CliError::Validation(e.to_string())
            }
            TrainError::Io(_) => CliError::Io(e.to_string()),
            TrainError::Checkpoint(inner) => CliError::from(inner),
            TrainError::Curve(inner) => CliError::from(inner),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(_) => CliError::Io(e.to_string()),
            CheckpointError::BadMagic(_)
            | CheckpointError::Version { .. }
            | CheckpointError::Config(_)
            | CheckpointError::Malformed(_)
            | CheckpointError::Model(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnsupportedModel(_)
            | EvalError::Empty
            | EvalError::InsufficientTruth { .. } => CliError::Validation(e.to_string()),
            EvalError::Io(_) => CliError::Io(e.to_string()),
            EvalError::Curve(inner) => CliError::from(inner),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
