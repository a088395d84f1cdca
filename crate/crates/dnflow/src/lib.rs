//! Minimizing-movement integration and attractor diagnostics for doubly
//! nonlinear gradient flows
//!
//!   alpha(u') - lap_m u + dj(u) + lambda g(u) ∋ f
//!
//! on a uniform 1-D Dirichlet grid. The crate provides the implicit time
//! stepper, structural checks on the nonlinearities (growth, ellipticity,
//! perturbation bounds), dissipation-rate fitting for absorbing sets, and
//! trajectory-bundle machinery for omega-limit and attractor studies.

pub mod attractor;
pub mod config;
pub mod diagnostics;
pub mod functionals;
pub mod grid;
pub mod runner;
pub mod stepper;
