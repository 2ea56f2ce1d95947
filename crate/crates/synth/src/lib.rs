//! Synthetic experiments for the PTZ calibration toolkit.
//!
//! A fixed camera base overlooks a standard pitch; random PTZ views of it
//! supply exactly labelled rays for the noise and base-uncertainty sweeps,
//! and an appearance oracle gives every world ray a descriptor for the
//! forest experiments.

pub mod appearance;
pub mod config;
pub mod forest_experiment;
pub mod report;
pub mod scene;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, ForestExperimentConfig};
pub use scene::{default_base, generate_scene, SyntheticScene};
pub use sweep::{run_base_uncertainty_sweep, run_noise_sweep, BaseMode, SweepRow};
