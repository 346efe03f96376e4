//! Simulation and estimation toolkit for multi-pulse quantum interferometry:
//! a two- or three-level atom driven by frequency-comb pulse trains, the
//! pulse sequences that accumulate the comb's CEO phase step, and the
//! statistics of estimating that step from Ramsey measurements.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comb;
pub mod dynamics;
pub mod error;
pub mod estimation;
mod integrator;
mod jet;
pub mod linalg;
pub mod noise;
pub mod protocols;
pub mod raman;

pub use error::{Error, Result};
