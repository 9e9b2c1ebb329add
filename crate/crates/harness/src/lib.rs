// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configs, grid runs, reports and the acceptance suite for
//! `gatecircuits`.

pub mod config;
pub mod error;
pub mod plot;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{Evaluation, ExperimentConfig, Preset};
pub use error::HarnessError;
pub use plot::{emit_plot_data, PlotKind};
pub use report::{Cell, RunReport, Timings};
pub use runner::run_experiment;
pub use verify::{verify_paper_suite, VerifyOptions, VerifySummary};
