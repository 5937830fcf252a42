//! Seeded experiment driver: configuration, trials and sweeps, bound
//! verification suites, and CSV/JSON output.

pub mod config;
pub mod experiment;
pub mod noise;
pub mod output;
pub mod suites;

pub use config::{AlphaConfig, AlphaKeyword, ExperimentConfig, KernelConfig, OneOrGrid, TargetConfig, TargetPreset};
pub use experiment::{
    run_sweep, run_trial, Experiment, PointSummary, RunOptions, SweepResult, TrialRecord, EXACT_RECOVERY_TOL,
};
pub use noise::NoiseModel;
pub use suites::{any_asserted_failure, report_bounds, BoundRow, BoundSuite};
