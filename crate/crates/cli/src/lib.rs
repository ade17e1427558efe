//! Batch runner behind the `radwalk` binary: parses experiment configs, runs
//! seeded trajectory ensembles through the diagnostics of the `radwalk`
//! crate and writes manifests, JSONL rows and CSV tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod replay;

use std::path::PathBuf;
use std::time::Instant;

use config::{Command, ExperimentConfig};
use error::CliError;
use manifest::{AbortRecord, EnsembleRecord, Manifest, Versions, MANIFEST_VERSION};
use output::Sink;

pub struct RunResult {
    pub command: Command,
    pub directory: PathBuf,
    pub manifest: Manifest,
    pub summary: serde_json::Value,
}

/// Runs `command` (or the config's own command) and writes all artifacts,
/// the manifest last.
pub fn run(cfg: &ExperimentConfig, command: Option<Command>) -> Result<RunResult, CliError> {
    let command = match command {
        Some(c) => c,
        None => cfg.command()?,
    };
    let mut cfg = cfg.clone();
    cfg.command = Some(command);
    let directory = cfg.output.resolve_directory();
    let started = Instant::now();
    let mut sink = Sink::create(&directory, &cfg.output)?;
    let manifest = |pass, outputs: &[String], ensembles, abort| Manifest {
        manifest_version: MANIFEST_VERSION,
        command,
        pass,
        versions: Versions::current(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config_text: cfg.to_text(),
        config: cfg.clone(),
        outputs: outputs.to_vec(),
        ensembles,
        abort,
    };
    let outcome = match commands::execute(&cfg, command, &mut sink) {
        Ok(outcome) => outcome,
        Err(CliError::Numerical {
            index,
            seed,
            step,
            norm,
        }) => {
            // Keep the seeds on disk so the diverging walk can be replayed.
            let abort = AbortRecord {
                index,
                sub_seed: seed,
                step,
                norm,
            };
            let main = EnsembleRecord::new("main", cfg.run.seed, cfg.run.n_traj);
            manifest(false, sink.written(), vec![main], Some(abort)).write(&directory)?;
            return Err(CliError::Numerical {
                index,
                seed,
                step,
                norm,
            });
        }
        Err(e) => return Err(e),
    };
    let manifest = manifest(outcome.pass, sink.written(), outcome.ensembles, None);
    manifest.write(&directory)?;
    Ok(RunResult {
        command,
        directory,
        manifest,
        summary: outcome.summary,
    })
}
