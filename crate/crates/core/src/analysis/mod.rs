//! Scoring runs against the reference meter and the derived statistics.

mod ecdf;
mod experiment;
mod report;
mod voltage;

pub use ecdf::{ecdf, ecdf_csv};
pub use experiment::{
    calibrate, median, repeat_experiment, run_experiment, Board, ExperimentConfig, ExperimentRun,
    CALIBRATION_DWELL_NS, DEFAULT_EXPERIMENT_S, DEFAULT_RUNS,
};
pub use report::{error_percent, ExperimentReport};
pub use voltage::{voltage_effect, VoltageEffect};
