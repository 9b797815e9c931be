//! Permutation-invariant operator learning with uncertainty quantification.
//!
//! A set-transformer embedding turns a variable-size set of sensor readings of
//! an input field into a fixed-size code; a conditional VAE around a
//! branch–trunk operator network then models the conditional law of the
//! output field given those readings. Around the model sit the pieces needed
//! to run the elliptic PDE benchmarks end to end: Gaussian-process field
//! samplers, finite-difference solvers, exact GP-posterior reference
//! ensembles, and distributional error metrics.

pub mod autodiff;
pub mod linalg;
pub mod metrics;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod cvae;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod oracle;
pub mod pde;
pub mod rng;
pub mod set_embed;
pub mod train;

pub use error::{Error, Result};
