//! Failure classes and their process exit codes.
//!
//! Every module error is folded into one of four classes: configuration
//! (exit 2), data (exit 3), numeric (exit 4), or I/O (exit 5).

use std::fmt;

use kws_core::data::DataError;
use kws_core::dsp::DspError;
use kws_core::eval::EvalError;
use kws_core::model::{CheckpointError, ModelError};
use kws_core::pretrain::PretrainError;
use kws_core::train::TrainError;
use kws_core::TensorError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys, enum values, or mismatched model/checkpoint.
    Config(String),
    /// Missing, malformed, or internally inconsistent datasets and artifacts.
    Data(String),
    /// Non-finite losses or failed numeric self-checks.
    Numeric(String),
    /// Filesystem failures, including append-only violations.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => t.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::Io(io) => io.into(),
            DspError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(io) => io.into(),
            DataError::Dsp(d) => d.into(),
            DataError::BadFraction(_)
            | DataError::EmptySeenTypes
            | DataError::SnrOffGrid(_)
            | DataError::UnknownNoiseType(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(io) => io.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss(_) => CliError::Numeric(e.to_string()),
            TrainError::BadConfig(_) | TrainError::CheckpointMismatch(_) => {
                CliError::Config(e.to_string())
            }
            TrainError::MissingNoise(_) => CliError::Data(e.to_string()),
            TrainError::Data(d) => d.into(),
            TrainError::Dsp(d) => d.into(),
            TrainError::Tensor(t) => t.into(),
            TrainError::Model(m) => m.into(),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::Io(io) => io.into(),
        }
    }
}

impl From<PretrainError> for CliError {
    fn from(e: PretrainError) -> Self {
        match e {
            PretrainError::NonFiniteLoss(_) | PretrainError::MaskSamplingFailed => {
                CliError::Numeric(e.to_string())
            }
            PretrainError::BadConfig(_)
            | PretrainError::DegenerateLength { .. }
            | PretrainError::KOutOfRange { .. }
            | PretrainError::TauOutOfRange(_)
            | PretrainError::Mismatch { .. } => CliError::Config(e.to_string()),
            PretrainError::MissingNoise => CliError::Data(e.to_string()),
            PretrainError::Tensor(t) => t.into(),
            PretrainError::Model(m) => m.into(),
            PretrainError::Checkpoint(c) => c.into(),
            PretrainError::Data(d) => d.into(),
            PretrainError::Dsp(d) => d.into(),
            PretrainError::Train(t) => t.into(),
            PretrainError::Io(io) => io.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadInput(m) => CliError::Config(m),
            EvalError::EmptySuite | EvalError::MissingAggregate(_) => {
                CliError::Data(e.to_string())
            }
            EvalError::Train(t) => t.into(),
            EvalError::Model(m) => m.into(),
            EvalError::Io(io) => io.into(),
            EvalError::Json(j) => CliError::Data(j.to_string()),
        }
    }
}
