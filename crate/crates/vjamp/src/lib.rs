//! File formats, threaded detection, synthetic data, benchmarks and the
//! command line on top of `vjamp-core`.

pub mod bench;
pub mod cli;
pub mod manifest;
pub mod netpbm;
pub mod parallel;
pub mod platform;
pub mod report;
pub mod synth;
pub mod training;
pub mod vjc;

pub use vjamp_core as core;
