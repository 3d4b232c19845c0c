//! Regression-based control variates for Euler-discretised Itô SDEs.
//!
//! The crate estimates `E[f(X_T)]` where `X` is simulated with the Euler
//! scheme, and reduces the Monte Carlo variance with control variates whose
//! coefficient functions are fitted by least squares on independent training
//! paths. Two constructions are provided:
//!
//! * the *integral* approach, which regresses pathwise sensitivities
//!   `∇f(X_T)·A_J⋯A_{j+1}` of the discretised tangent process, and
//! * the *series* approach, which regresses first-order Wiener chaos
//!   targets `f(X_T)·Δ_jW/√Δ`.
//!
//! Standard Monte Carlo and multilevel Monte Carlo baselines, a parameter
//! planner and the two benchmark models (`sech1d`, `arctan5d`) live here as
//! well. The crate is `no_std` and only needs `alloc`; IO, threading and
//! timing are provided by the `strongcv` companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod control_variates;
mod error;
pub mod estimators;
pub mod exec;
pub mod hermite;
pub mod models;
pub mod planner;
pub mod regression;
pub mod rng;
pub mod sim;

pub use control_variates::{Approach, ControlVariateModel, TrainingMeta};
pub use error::{Error, Result};
pub use exec::{BlockTask, Executor, Sequential};
pub use regression::{BasisSpec, CoefficientTable};
pub use rng::{PathStreams, RngStream};
pub use sim::{PathBundle, SdeModel, TimeGrid};
