//! Complex-frequency synchronization analysis for converter-based power systems.
//!
//! The crate models networks of grid-forming converters running dispatchable
//! virtual oscillator control (dVOC) and analyzes them in complex-angle
//! coordinates `ln v + jθ`:
//!
//! - [`angle`]: complex angle / complex frequency coordinates and estimators.
//! - [`network`]: admittance assembly, Kron reduction, normalized and linear
//!   complex power flow.
//! - [`controllers`]: dVOC right-hand sides and the complex droop law.
//! - [`fast`]: the fast linear system, its spectrum and the spectral and
//!   parametric synchronization conditions.
//! - [`slow`]: the slow linearly approximated system, its unique equilibrium
//!   and Lyapunov diagnostics.
//! - [`sim`]: fixed-step RK4 simulation of every model, with sync detection.
//! - [`freq`]: admittance transfer functions and Nyquist criteria.
//!
//! Batch workloads (ensembles, sweeps, curve evaluation) go through [`par`],
//! which uses rayon when the `parallel` feature is enabled and runs
//! sequentially otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod controllers;
pub mod error;
pub mod fast;
pub mod freq;
pub mod linalg;
pub mod network;
pub mod par;
pub mod sim;
pub mod slow;

pub use nalgebra::{Complex, DMatrix, DVector};

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = Complex<f64>;

/// Shorthand for `re + j·im`.
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
