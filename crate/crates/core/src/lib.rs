//! Spherical p-spin Langevin dynamics and the planar bounding flows that
//! control its energy and gradient observables.
//!
//! The crate is organised bottom-up:
//!
//! - [`pspin_model`]: the random Hamiltonian, its derivatives and the
//!   observables `(u, v, w)`.
//! - [`sphere_dynamics`]: Euler-Maruyama Langevin integration on the sphere.
//! - [`bounding_flows`]: closed-form coefficients, fixed points and an RK4
//!   integrator for the lower and upper flows.
//! - [`phase_regions`]: the regions `A0..A4`, their enlargements and a
//!   phase-portrait verifier.
//! - [`comparison`]: executable comparison checks for planar paths.
//! - [`regularity_diagnostics`]: finite-N Gaussian field statistics.
//! - [`experiment`]: configured scenarios, artifacts and verdicts.

pub mod bounding_flows;
pub mod comparison;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod phase_regions;
pub mod pspin_model;
pub mod regularity_diagnostics;
pub mod rng;
pub mod sphere_dynamics;

pub use error::{Error, Result};
