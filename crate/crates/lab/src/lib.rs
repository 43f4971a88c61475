//! Batch runner for the verification suites of `freesym`: configuration,
//! instance generation and CSV / plot-data reports.

pub mod config;
pub mod generate;
pub mod report;
pub mod suites;

pub use config::{ExperimentConfig, Suite};
pub use report::{emit_report, Format, ReportRow};
pub use suites::run_experiment;
