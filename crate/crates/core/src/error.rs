use thiserror::Error;

use crate::flow::Trajectory;

pub type Result<T, E = FocalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FocalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported dimension {0}: ellipsoids need at least 3 ambient coordinates")]
    UnsupportedDimension(usize),

    #[error("constraint violation: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ConstraintViolation { residual: f64, tolerance: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure {
        t: f64,
        reason: String,
        partial: Option<Box<Trajectory>>,
    },

    #[error("z = {z} lies within {distance:.3e} of the axis value {alpha} (pole of Q_z)")]
    PoleOfQ { z: f64, alpha: f64, distance: f64 },

    #[error("line does not touch the quadric: normalized tangency residual {0:.3e}")]
    NoContact(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no umbilic point found (minimal defect {0:.3e})")]
    NoUmbilicFound(f64),

    #[error("invalid multiplicities {found:?}, expected pattern {expected}")]
    InvalidMultiplicities { found: Vec<usize>, expected: String },

    #[error("invalid isometry: {0}")]
    InvalidIsometry(String),

    #[error("trajectory reached the barrier |x| = {distance:.3e} at t = {t}")]
    BarrierProximity { t: f64, distance: f64 },

    #[error("reduction inconsistency: angular momentum drift {0:.3e}")]
    ReductionInconsistency(f64),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FocalError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FocalError::InvalidInput(msg.into())
    }

    /// True for errors caused by the numerics rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FocalError::IntegrationFailure { .. }
                | FocalError::NumericalFailure(_)
                | FocalError::NoUmbilicFound(_)
                | FocalError::BarrierProximity { .. }
                | FocalError::ReductionInconsistency(_)
                | FocalError::InsufficientResolution(_)
                | FocalError::NoContact(_)
                | FocalError::PoleOfQ { .. }
        )
    }
}
