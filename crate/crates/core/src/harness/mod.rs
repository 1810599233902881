//! Benchmark instances, suite configuration and batch runs.

pub mod config;
pub mod io;
pub mod recipes;
pub mod suite;

pub use config::{RunConfig, SuiteConfig};
pub use recipes::{custom_instance, generate_instance, GeneratedInstance, GroundTruth, Recipe};
pub use suite::{certify, run_suite, SuiteOutcome, EXIT_AUDIT, EXIT_INPUT, EXIT_OK};
