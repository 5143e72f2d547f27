//! Simulation of an entangled-photon quantum eraser whose which-path marker
//! is reshaped by a polarization-sensitive Mach-Zehnder interferometer.
//!
//! The crate is layered bottom-up:
//!
//! - [`state`]: dense labelled state vectors, local operators, projective
//!   measurement and partial trace.
//! - [`jones`]: wave plates, polarizers and the interferometer operator.
//! - [`pipeline`]: the experiment chain and its closed-form port statistics.
//! - [`pattern`]: far-field interference patterns from slit coherences.
//! - [`counts`]: imperfection model and Poisson count simulation.
//! - [`fit`]: pattern fitting and inner-product bookkeeping.
//! - [`config`] and [`scenario`]: scenario files and the figure/table runners.

pub mod error;
pub mod state;
pub mod jones;
pub mod pipeline;
pub mod pattern;
pub mod counts;
pub mod fit;
pub mod config;
pub mod scenario;

pub use error::{Error, Result};
