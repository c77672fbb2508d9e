//! Geodesic paths of probability amplitudes for prescribed Fisher-information
//! profiles, quantum distinguishability metrics, and Riemannian
//! thermodynamic quantities along optimally reparametrized paths.

#![forbid(unsafe_code)]

pub mod cli;
pub mod error;
pub mod fisher;
pub mod geodesic;
pub mod ode;
pub mod paths;
pub mod quantum;
pub mod special;
pub mod thermo;

pub use error::{Error, Result};
