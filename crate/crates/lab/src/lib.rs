//! Experiment harness for `derl-core`: configuration files, seeded runs,
//! the mixed-target sweep, the actor-critic ablation and CSV/SVG export.

pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod format;

pub use config::{load_config, parse_config, EnvSpec, ExperimentConfig};
pub use error::{LabError, Result};
pub use experiment::{ablate_ac, run_experiment, sweep_epsilon, RunResult, SweepTable};
