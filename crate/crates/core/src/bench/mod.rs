//! Data files, experiment configs, and multi-trial benchmark reports.

pub mod config;
pub mod io;
pub mod report;

pub use config::{C2Init, EstimatorSpec, ExperimentConfig, Grid, Setting, SigmaMode};
pub use io::{
    read_points_file, read_sidecar, sidecar_path, write_points_file, write_sample, Sidecar,
};
pub use report::{
    run_bench, run_estimator, trial_sample, trial_sigma, Aggregate, BenchReport, EstimateOutcome,
    TrialRecord,
};
