//! Radial simulator and diagnostics for the damped energy-critical focusing
//! wave equation `u_tt − Δu + αu_t = |u|^{4/(D−2)}u`.

// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubbles;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod lab;
pub mod modulation;
pub mod propagator;
pub mod spectral;
pub mod trapping;
pub mod virial;

pub use error::{Error, Result};
