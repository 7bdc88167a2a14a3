//! Contrastive conditional neural processes at desk scale.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] — a tape-based reverse-mode autodiff core with Adam;
//! - [`datagen`] — seedable generators for 1D function families, GP draws,
//!   and Lotka-Volterra trajectories, plus context/target sampling;
//! - [`model`] — encoder branches, attentive aggregation, Gaussian decoder,
//!   and the contrastive heads;
//! - [`objectives`] — reconstruction NLL plus the temporal and function
//!   InfoNCE losses;
//! - [`training`] — episodic training with per-objective parameter groups;
//! - [`eval`] — few-shot metrics and the frozen-representation coefficient
//!   probe.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod tensor;
pub mod training;

pub use error::{CcnpError, Result};
