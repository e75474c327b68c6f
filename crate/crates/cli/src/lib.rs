//! Library side of the `vawt` command line tool, split out so the
//! acceptance suite can drive the same code paths.

pub mod commands;
pub mod experiment;

pub use commands::{export_stl, resolve_genome, run, CommandError, RunOptions};
pub use experiment::{run_experiment, write_report, ExperimentConfig, ExperimentReport};
