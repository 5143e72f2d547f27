//! Error types shared across the simulator.

use thiserror::Error;

use crate::state::SubsystemLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("subsystem {0:?} appears more than once")]
    DuplicateLabel(SubsystemLabel),

    #[error("subsystem {0:?} is not part of the state")]
    MissingLabel(SubsystemLabel),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator flagged unitary deviates from unitarity by {deviation:e}")]
    NotUnitary { deviation: f64 },

    #[error("outcome probability {probability:e} is below the threshold {threshold:e}")]
    ImpossibleOutcome { probability: f64, threshold: f64 },

    #[error("keep list must name at least one subsystem")]
    EmptyKeep,

    #[error("zero vector cannot define a polarization state")]
    ZeroVector,

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("non-physical density matrix: {0}")]
    NonPhysical(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no discrimination setting exists: {0}")]
    Unsolvable(String),

    #[error("inner product at output port {port} is undefined (port probability {probability:e})")]
    UndefinedInnerProduct { port: u8, probability: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("expected count {mean:e} exceeds the supported range")]
    CountOverflow { mean: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
