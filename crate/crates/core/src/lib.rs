//! Partially-calibrated sparse subarray toolkit.
//!
//! - [`geometry`]: type-I / type-II subarray layouts, difference coarrays and
//!   DoF analysis.
//! - [`signal_model`]: snapshot simulation and exact covariances.
//! - [`coarray`]: coarray vectorization, spatial smoothing, noise subspaces.
//! - [`estimators`]: GCA-MUSIC, GCA-rMUSIC and the calibrated SS-MUSIC baseline.
//! - [`crlb`]: Fisher information and Cramér–Rao bound for the
//!   uncorrelated-source, partially-calibrated model.
//! - [`harness`]: seeded Monte Carlo sweeps and CSV output.

pub mod coarray;
pub mod crlb;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod signal_model;

pub use error::{Error, Result};
