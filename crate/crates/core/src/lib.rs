//! Gaussian-process surrogates constrained to be monotone at a finite set of
//! virtual points.
//!
//! The crate is organized bottom-up: [`kernels`] and [`gp`] implement
//! derivative-enhanced GP regression, [`sampling`] holds generic samplers
//! and solvers, [`constrained`] builds the constrained posteriors on top of
//! them, and [`harness`] wires everything into reproducible experiments.

pub mod applications;
pub mod constrained;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod sampling;

pub use error::{Error, Result};
