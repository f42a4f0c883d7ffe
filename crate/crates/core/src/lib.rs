//! Distributed admission and power control with active link protection.
//!
//! The crate is `no_std` (with `alloc`) and purely numerical. It provides
//!
//! - the standard interference function abstraction with affine,
//!   receive-strategy (MMSE), worst-case and asymptotic instantiations,
//! - feasibility indices, fixed points and regime classification,
//! - the unconstrained admission iteration and its asymptotic analysis,
//! - the power-constrained iteration with online protection conditions and
//!   distress signaling,
//! - MIMO effective-gain models and alternating primal/reversed transceiver
//!   optimization.
//!
//! File formats, scenario generation and the command line live in the
//! `alpnet` crate.

#![no_std]
// `!(x < y)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod alp;
pub mod beamforming;
pub mod constrained;
mod error;
pub mod feasibility;
pub mod interference;
pub mod linalg;

pub use error::{Error, Result};
pub use interference::{
    evaluate, evaluate_weighted, AffineModel, InterferenceFunction, MinStrategyModel, PowerVector, SirTargets,
    WorstCaseModel,
};
