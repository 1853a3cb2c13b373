//! Configuration, experiment drivers and output for the command-line tool.

pub mod commands;
pub mod config;
pub mod converge;
pub mod output;

pub use commands::{run_diagnostics, DiagnoseReport};
pub use config::{ExperimentConfig, OutputFormat};
pub use converge::{run_convergence, ConvergenceReport, ConvergenceRow, Distance};
