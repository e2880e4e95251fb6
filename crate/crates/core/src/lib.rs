//! Superoptimal treatment regimes from instrumental-variable data.

pub mod artifact;
pub mod bounds;
pub mod data;
pub mod cli;
pub mod diagnose;
pub mod error;
pub mod estimate;
pub mod identify;
pub mod regime;
pub mod serve;
pub mod simulate;
pub use error::Error;
