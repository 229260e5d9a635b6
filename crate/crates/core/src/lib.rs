//! Completeness and consistency assessment of multi-source registry exports.

pub mod consistency;
pub mod eventtime;
pub mod ingest;
pub mod missingness;
pub mod misstree;
pub mod model;
pub mod synth;

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
