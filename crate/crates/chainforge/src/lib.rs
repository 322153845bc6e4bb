//! Configuration, experiment harness, result files and closed-form oracle
//! checks for the chainforge optimizer.

pub mod config;
pub mod costs;
pub mod experiments;
pub mod oracle;
pub mod output;

pub use config::{Config, ConfigError};
pub use experiments::{run, ExperimentPlan, RunOptions, SweepResult};
