//! Experiment runner: sweeps over IRS size, SNR and secrecy rate, timing,
//! Monte Carlo validation of the closed-form outage, dataset generation and
//! network training. Every command writes CSV.

pub mod commands;
pub mod config;
pub mod experiments;

pub use config::{ExperimentConfig, NetShape, SweepVar};
pub use experiments::{bench_time, sweep, validate_mc, Networks, SweepRow, TimingRow};
