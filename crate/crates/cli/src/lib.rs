//! Library side of the `sca` command-line tool: config handling, reports and
//! the command bodies.

pub mod commands;
pub mod config;
pub mod report;

pub use config::{AugmentationSpec, ExperimentConfig};
pub use report::{AttackReport, RecoveryReport};
