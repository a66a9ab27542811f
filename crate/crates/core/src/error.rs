//! Error type shared across the library.

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A per-station vector does not match the scenario's station count.
    #[error("expected {expected} per-station entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A placement does not allocate exactly the scenario's VM budget.
    #[error("placement allocates {got} VMs, budget is {expected}")]
    VmBudgetMismatch { expected: u32, got: u32 },

    /// The placement space is too large to enumerate; callers must either
    /// raise the cap deliberately or skip enumeration-based analyses.
    #[error("placement space has {states} states, enumeration cap is {cap}")]
    EnumerationTooLarge { states: u128, cap: u128 },

    /// A parameter violates its documented range.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two distributions do not share the same support.
    #[error("distribution supports differ")]
    SupportMismatch,

    /// Malformed scenario file.
    #[error("scenario file: {0}")]
    ScenarioFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        CoreError::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
