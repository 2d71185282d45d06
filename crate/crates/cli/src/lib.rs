//! Experiment runner: JSON configs in, deterministic CSV/JSON artifacts out.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use anyhow::Result;

pub use commands::{
    cmd_diagnose, cmd_oracle, cmd_run, cmd_sweep, EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK,
    EXIT_PROBE_FAILED, EXIT_UNCERTIFIED,
};
pub use config::{ExperimentConfig, Mode, SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct Invocation {
    pub mode: Mode,
    pub config: PathBuf,
    pub output: Option<PathBuf>,
    pub jobs: usize,
    pub seed: Option<u64>,
}

/// Loads the config, applies command-line overrides and dispatches.
pub fn execute(inv: &Invocation) -> Result<i32> {
    let mut cfg = ExperimentConfig::load(&inv.config)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    let out = inv.output.as_deref();
    dispatch(inv.mode, &cfg, out, inv.jobs)
}

pub fn dispatch(
    mode: Mode,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    jobs: usize,
) -> Result<i32> {
    match mode {
        Mode::Run => cmd_run(cfg, out),
        Mode::Diagnose => cmd_diagnose(cfg, out),
        Mode::Sweep => cmd_sweep(cfg, out, jobs),
        Mode::Oracle => cmd_oracle(cfg),
    }
}
