//! Named instances, the divisible-to-indivisible discretizer and the experiment
//! runner that checks each result as a pass/fail report.

pub mod discretize;
pub mod experiments;
pub mod generators;
pub mod manifest;
pub mod report;

pub use experiments::{run_all, run_experiment, Context};
pub use generators::Named;
pub use report::{ExperimentReport, Verdict};
