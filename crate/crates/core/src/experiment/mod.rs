//! Experiment harness: configuration, replicate runs, sweeps and reports.

pub mod config;
pub mod fit;
pub mod harness;
pub mod report;

pub use config::{ExperimentConfig, Resolved, SEED_STRIDE};
pub use fit::{log_log_slope, ols, LineFit};
pub use harness::{
    bound_report, cmd_audit, cmd_deviation, cmd_run, cmd_sweep_k, ResultRow, RunReport,
    SweepResult, TailReport,
};
pub use report::{write_csv, write_csv_file, write_json_file, CSV_HEADER};
