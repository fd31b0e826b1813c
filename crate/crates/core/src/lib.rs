//! Second-order quadratic variations of fractional Gaussian processes.
//!
//! The crate simulates fractional Brownian motion, bifractional Brownian motion observed on an
//! interval and anisotropic fractional Brownian motion restricted to a segment; computes second
//! order quadratic variations, their exact finite-n moments, the closed-form constants of their
//! almost-sure limits and central limit theorems, and the ratio-type estimators built on them.

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod mc;
pub mod models;
pub mod numeric;
pub mod quadvar;
pub mod sampling;

pub use asymptotics::{constants_for, TheoreticalConstants};
pub use error::{Error, Result};
pub use models::{cov_grid, CovGrid, HurstProfile, ProcessModel};
pub use sampling::PathSample;
