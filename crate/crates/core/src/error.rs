use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector is not a unit vector (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("trajectory too short: need {needed} steps, have {have}")]
    TrajectoryTooShort { needed: usize, have: usize },

    #[error("position diverged at step {step} (norm {norm:e})")]
    NonFinitePosition { step: usize, norm: f64 },

    #[error("trajectory {index} (sub-seed {seed}) diverged at step {step} (norm {norm:e})")]
    TrajectoryAbort {
        index: usize,
        seed: u64,
        step: usize,
        norm: f64,
    },

    #[error("model does not provide exact conditional moments")]
    MissingMoments,

    #[error("sample contains NaN at index {index}")]
    NanInSample { index: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("model spec line {line}: {reason}")]
    Spec { line: usize, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
