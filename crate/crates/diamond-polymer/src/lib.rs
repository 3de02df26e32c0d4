//! Directed polymers on diamond hierarchical lattices.
//!
//! Exact partition functions on seeded disorder, deterministic variance
//! flows, samplers for the intermediate-disorder limit laws and Monte Carlo
//! checks of the fluctuation limits.

pub mod disorder;
pub mod error;
pub mod expcli;
pub mod fluctuation;
pub mod lattice;
pub mod limitlaw;
pub mod polymer;
pub mod population;
pub mod rgflow;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::LatticeParams;
