use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub radwalk: String,
    pub radwalk_cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            radwalk: radwalk::VERSION.to_string(),
            radwalk_cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Seeds of one trajectory ensemble: trajectory `i` used `sub_seeds[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub label: String,
    pub master_seed: u64,
    pub sub_seeds: Vec<u64>,
}

impl EnsembleRecord {
    pub fn new(label: impl Into<String>, master_seed: u64, n_traj: usize) -> Self {
        Self {
            label: label.into(),
            master_seed,
            sub_seeds: (0..n_traj as u64)
                .map(|i| radwalk::ensemble::sub_seed(master_seed, i))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: Command,
    pub pass: bool,
    pub versions: Versions,
    pub wall_time_seconds: f64,
    /// Canonical text of the config; re-running from it reproduces the run.
    pub config_text: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    /// The first entry is the run's main ensemble, used by `replay`.
    pub ensembles: Vec<EnsembleRecord>,
    /// Set when a trajectory diverged and the run stopped.
    pub abort: Option<AbortRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub index: usize,
    pub sub_seed: u64,
    pub step: usize,
    pub norm: f64,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    /// Reads a manifest, rejecting other format versions before decoding
    /// the rest.
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bad = |reason: String| CliError::Manifest {
            path: path.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        match raw.get("manifest_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MANIFEST_VERSION as u64 => {}
            Some(v) => {
                return Err(bad(format!(
                    "version mismatch: manifest is version {v}, this build reads version {MANIFEST_VERSION}"
                )))
            }
            None => return Err(bad("missing `manifest_version`".into())),
        }
        serde_json::from_value(raw).map_err(|e| bad(e.to_string()))
    }
}
