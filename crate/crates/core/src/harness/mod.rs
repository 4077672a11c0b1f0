//! Experiment orchestration and reports.

pub mod config;
pub mod experiments;
pub mod headroom;
pub mod lab;
pub mod report;

pub use config::ExperimentConfig;
pub use experiments::{
    run_datasize_ablation, run_decoding_control, run_experiment_a, run_experiment_b, run_forgetting, run_headroom,
    run_kl_ablation, RunResult,
};
pub use headroom::{fixture_rows, headroom_analysis, HeadroomReport, HeadroomRow};
pub use lab::{ArmRecord, Lab, RunDir};
pub use report::{regenerate, ExperimentKind, Manifest};
