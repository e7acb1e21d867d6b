// SPDX-License-Identifier: Apache-2.0

//! Artifact files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::plot;
use crate::runner::Outcome;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEntry {
    pub index: usize,
    pub label: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: &'static str,
    pub name: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub status: &'static str,
    pub config: String,
    pub artifacts: Vec<Artifact>,
    pub points: Vec<PointEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Every artifact of a run as `(file name, contents)`, in write order.
pub fn render(outcome: &Outcome, plots: bool) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for t in &outcome.tables {
        files.push((format!("{}.csv", t.name), t.to_csv()));
        if plots {
            if let Some(svg) = plot::svg(t) {
                files.push((format!("{}.svg", t.name), svg));
            }
        }
    }
    files
}

/// Write artifacts and `manifest.json` into `dir`.
pub fn write(
    dir: &Path,
    cfg: &ExperimentConfig,
    seed: u64,
    outcome: &Outcome,
    plots: bool,
    wall_time_s: f64,
) -> Result<PathBuf, CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut artifacts = Vec::new();
    for (name, contents) in render(outcome, plots) {
        let path = dir.join(&name);
        fs::write(&path, &contents).map_err(|e| io(&path, e))?;
        artifacts.push(Artifact {
            file: name,
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        });
    }
    let points = outcome
        .points
        .iter()
        .map(|p| PointEntry {
            index: p.index,
            label: p.label.clone(),
            status: if p.error.is_some() { "failed" } else { "ok" },
            message: p.error.clone(),
        })
        .collect();
    let mut echo = cfg.clone();
    echo.seed = seed;
    let manifest = Manifest {
        tool: "fbdicke",
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind.name(),
        name: cfg.name.clone(),
        seed,
        threads: rayon::current_num_threads(),
        wall_time_s,
        status: if outcome.failed() > 0 { "partial" } else { "ok" },
        config: echo.to_toml(),
        artifacts,
        points,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    Ok(path)
}
