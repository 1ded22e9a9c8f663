//! File formats, benchmarks and checks around `fst24-core`.

pub mod artifacts;
pub mod bench;
pub mod config;
pub mod patterns;
pub mod suite;
