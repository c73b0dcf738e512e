//! Config-driven experiment runner for risk-averse equilibrium learning:
//! multi-trial runs, CSV traces and aggregates, an SVG convergence plot and
//! bound-check reports.

pub mod config;
pub mod experiment;
pub mod plot;

pub use config::{
    load_config, parse_config, validate_config, ConfigError, ExperimentConfig, GameSpec,
};
pub use experiment::{report, run_experiment, BoundRow, OutputBundle, RunOptions};
pub use plot::emit_plot;
