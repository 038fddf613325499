//! Experiment harness: config resolution, seed sweeps with baselines,
//! CSV/JSON emission, diagnostics, and static SVG regret plots.

pub mod config;
pub mod csvio;
pub mod error;
pub mod plot;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::HarnessError;
