//! Simulation and estimation toolkit for relaxation-based color magnetic particle imaging.
//!
//! The pipeline runs from field-free-point trajectories (`trajectory`) through signal synthesis
//! (`physics`), slew-rate corrected relaxation time estimation (`estimator`), signal
//! conditioning (`preprocess`) and tau-map reconstruction (`mapping`). `harness` wires the
//! pieces into config-driven experiments.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod mapping;
pub mod physics;
pub mod preprocess;
pub mod trajectory;

pub use error::{Error, Result};
