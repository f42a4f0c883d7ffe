use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("negative power at index {index}")]
    NegativePower { index: usize },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: &'static str },

    /// Iteration budget exhausted; carries the last iterate.
    #[error("iteration budget of {iterations} exhausted")]
    Budget { iterations: usize, last: Vec<f64> },

    #[error("power vector is not delta-valid at components {components:?}")]
    NotDeltaValid { components: Vec<usize> },

    #[error("power {power} of user {user} exceeds its cap {cap}")]
    AboveCap { user: usize, power: f64, cap: f64 },

    #[error("effective signal gain of user {user} is degenerate")]
    DegenerateBeam { user: usize },

    #[error("active/inactive partition not stabilized (first unstable index {index})")]
    PartitionUnstable { index: usize },

    #[error("asymptotic probe sequence increased at scale {scale}")]
    NotMonotone { scale: f64 },

    #[error("bisection could not bracket the feasibility boundary")]
    Bracket,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(what: &'static str, reason: &'static str) -> Error {
    Error::Invalid { what, reason }
}
