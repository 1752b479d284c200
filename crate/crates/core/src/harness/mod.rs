//! Configuration, numerical examples and output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentId};
pub use experiments::{run_example1, run_example2, EX1_HEADER, EX2_HEADER};
pub use output::{write_bytes, write_results, Table};
