//! Spectral solvers, stochastic flows and Feynman–Kac estimators for the
//! vector advection equation on periodic tori.

pub mod duality;
pub mod error;
pub mod fields;
pub mod fk;
pub mod flows;
pub mod pde;
pub mod rng;
pub mod so3;

pub use error::{Error, Result};
pub use fields::{Grid, ScalarField, SpectralField, VectorField};
