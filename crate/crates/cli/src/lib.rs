//! Configuration, orchestration and file output for the `spinwig` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{benchmark, simulate, sweep, BenchmarkOutcome, SimulateOutcome, SweepOutcome};
pub use config::{Overrides, RunConfig};
pub use error::CliError;
