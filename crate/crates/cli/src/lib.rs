// SPDX-License-Identifier: Apache-2.0

//! Config-driven experiment runner for the `fbdicke` library.

pub mod config;
pub mod output;
pub mod plot;
pub mod recipes;
pub mod runner;
pub mod table;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ExperimentConfig, Kind};
pub use runner::{run, Outcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

/// Read a config from a file, falling back to the bundled recipe of that
/// name when no such file exists.
pub fn load(source: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(source);
    let text = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{source}: {e}")))?
    } else if let Some(text) = recipes::find(source) {
        text.to_string()
    } else {
        return Err(CliError::Io(format!("{source}: no such file or bundled recipe")));
    };
    ExperimentConfig::from_toml(&text)
}

/// Options that override the config from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub manifest: PathBuf,
    pub outcome: Outcome,
}

/// Run a loaded config and write its artifacts. A run in which any point
/// failed still writes everything, then reports a numerical error.
pub fn execute(cfg: &ExperimentConfig, ov: &Overrides) -> Result<RunReport, CliError> {
    let seed = ov.seed.unwrap_or(cfg.seed);
    let dir = ov.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let start = Instant::now();
    let outcome = runner::run(cfg, seed).map_err(CliError::Numerical)?;
    let wall = start.elapsed().as_secs_f64();
    let manifest = output::write(&dir, cfg, seed, &outcome, ov.plot, wall)?;
    let failed = outcome.failed();
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} of {} points failed; partial results in {}",
            outcome.points.len(),
            dir.display()
        )));
    }
    Ok(RunReport { manifest, outcome })
}
