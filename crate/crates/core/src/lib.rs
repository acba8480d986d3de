//! Stochastic higher spin six vertex model, mixed q-TASEP, and the
//! moment and Fredholm formulas that connect them.

pub mod config;
pub mod coupling;
pub mod diffops;
pub mod error;
pub mod harness;
pub mod moments;
pub mod params;
pub mod qseries;
pub mod qtasep;
pub mod rng;
pub mod schur;
pub mod stats;
pub mod vertex;

pub use error::{Error, Result};
pub use params::{validate_params, ModelParams, Partition, ValidityReport};
pub use qseries::Specialization;
