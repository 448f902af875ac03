//! Statistical checks and the experiment catalog.

pub mod experiments;
pub mod report;
pub mod stats;

pub use experiments::{run_experiment, ExperimentConfig, ExperimentId, VerifyError};
pub use report::{ReportRow, TestReport};
