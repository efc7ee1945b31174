//! Configuration, experiment orchestration and output for the `mvx` binary.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod distances;
pub mod experiments;

pub use config::{load_config, parse_config, ExperimentConfig, Kind};
pub use experiments::{execute, run_experiment, write_outputs, Check, Outcome};
