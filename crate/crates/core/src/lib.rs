//! Multi-objective search over test suites for a synthetic app-under-test,
//! with per-generation fitness-landscape analysis and a diversity-preserving
//! NSGA-II variant.

pub mod engine;
pub mod error;
pub mod genotype;
pub mod harness;
pub mod landscape;
pub mod stats;
pub mod sut;
pub mod variation;

pub use error::{Error, Result};
