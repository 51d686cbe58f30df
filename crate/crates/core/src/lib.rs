//! Spectral Galerkin laboratory for reflected SPDEs on the unit ball of a
//! Hilbert space: reflected stepping, coupling by change of measure, and
//! Monte Carlo checks of the asymptotic log-Harnack inequality.

pub mod coupling;
pub mod error;
pub mod harnack;
pub mod integrator;
pub mod mc;
pub mod models;
pub mod noise;
pub mod reflection;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod test_function;

pub use error::{LabError, Result};
pub use spectral::{BallState, Spectrum, StateVector};
