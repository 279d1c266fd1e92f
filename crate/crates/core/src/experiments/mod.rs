//! Configured experiments: ε sweeps, cell validation, occupational measures and plots.

pub mod config;
pub mod occupational;
pub mod plots;
pub mod sweeps;
pub mod table;

pub use config::{ExperimentConfig, Setup};
pub use occupational::{estimate_occupational_measure, run_occupational, OccupationalHistogram};
pub use plots::emit_plots;
pub use sweeps::{reduce_setup, run_cell_validation, run_trajectory_sweep, run_value_sweep, simulate_setup};
pub use table::Table;

use crate::error::Error;
use crate::hjb::DEFAULT_NODE_BUDGET;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] Error),

    #[error("at epsilon = {epsilon}: {source}")]
    Sweep { epsilon: f64, source: Error },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(e.into())
    }
}

impl ExperimentError {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "ConfigError",
            ExperimentError::Numerical(e) | ExperimentError::Sweep { source: e, .. } => e.name(),
            ExperimentError::Io(_) => "IoError",
        }
    }

    /// 2 for bad input, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub budget: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: 0, budget: DEFAULT_NODE_BUDGET }
    }
}

impl RunOptions {
    /// Config values, overridden by any explicit command-line value.
    pub fn from_config(cfg: &ExperimentConfig, seed: Option<u64>, budget: Option<usize>) -> Self {
        let d = Self::default();
        Self {
            seed: seed.or(cfg.seed).unwrap_or(d.seed),
            budget: budget.or(cfg.budget_nodes).unwrap_or(d.budget),
        }
    }
}
