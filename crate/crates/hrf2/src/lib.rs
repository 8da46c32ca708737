//! Depth-2 hierarchical rectified flow (HRF2) with mini-batch
//! optimal-transport couplings in data space and velocity space.
//!
//! The crate provides the synthetic benchmark distributions, exact mini-batch
//! OT, the closed-form velocity-distribution oracle for Gaussian-mixture
//! sources and targets, a self-contained trainable acceleration field,
//! coupled-ODE Euler samplers with NFE accounting, evaluation metrics, and a
//! CLI for reproducible experiments.

pub mod cli;
pub mod coupling;
pub mod dists;
pub mod error;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod svg;
pub mod training;

/// A d-dimensional point; the currency of all operations (d ∈ {1, 2}).
pub type Point = ndarray::Array1<f64>;

/// A row-major collection of points.
pub type SampleBatch = ndarray::Array2<f64>;

pub use error::{Error, Result};
