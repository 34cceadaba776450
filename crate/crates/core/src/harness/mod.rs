//! Experiment configuration, verification suites, the worst-case demonstration,
//! parameter sweeps and the command-line front end.

pub mod cli;
pub mod config;
pub mod optimality;
pub mod sweep;
pub mod verify;

pub use config::{Experiment, ExperimentConfig};
pub use verify::{CheckEntry, Status, VerificationReport};
