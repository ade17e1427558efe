//! Regenerates one trajectory of a finished run from its manifest.

use std::fs;
use std::path::{Path, PathBuf};

use radwalk::ensemble::sub_seed;
use radwalk::stats::lattice_start;
use radwalk::walk::{
    ceil_steps, compensators, floor_steps, summarize_trajectory, Trajectory, TrajectorySummary, Walker,
};
use serde::Serialize;

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;
use crate::manifest::Manifest;

#[derive(Debug, Clone, Serialize)]
pub struct Replay {
    pub index: usize,
    pub sub_seed: u64,
    pub command: Command,
    /// Steps simulated.
    pub steps: usize,
    /// Scaling index and horizon of the compensator track.
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub summary: TrajectorySummary,
    /// `Y_n(t_eval)`; only for `marginal-fit`.
    pub y_eval: Option<f64>,
    pub files: Vec<String>,
}

/// Steps and `(n, T)` scaling replayed for each command.
fn replay_scaling(cfg: &ExperimentConfig, command: Command) -> Option<(usize, usize, f64)> {
    let run = &cfg.run;
    match command {
        Command::Validate => None,
        Command::Compensators | Command::MarginalFit => {
            Some((ceil_steps(run.n, run.horizon), run.n, run.horizon))
        }
        Command::Simulate | Command::Phase => Some((run.n_steps, run.n_steps.max(1), 1.0)),
        Command::Moments | Command::NullOccupation => {
            let top = cfg.grid(command).into_iter().max().unwrap_or(1).max(1);
            Some((top, top, 1.0))
        }
    }
}

/// Replays trajectory `index` of the run recorded in `manifest_path`,
/// writing its positions and compensator track as CSV into `out_dir`
/// (default: the manifest's directory).
pub fn replay(manifest_path: &Path, index: usize, out_dir: Option<&Path>) -> Result<Replay, CliError> {
    let manifest = Manifest::read(manifest_path)?;
    let bad = |reason: String| CliError::Manifest {
        path: manifest_path.to_path_buf(),
        reason,
    };
    let cfg = ExperimentConfig::parse(&manifest.config_text)?;
    let command = manifest.command;
    let ensemble = manifest
        .ensembles
        .first()
        .ok_or_else(|| bad(format!("`{command}` runs have no trajectories to replay")))?;
    let seed = *ensemble.sub_seeds.get(index).ok_or_else(|| {
        bad(format!(
            "trajectory index {index} out of range (run has {} trajectories)",
            ensemble.sub_seeds.len()
        ))
    })?;
    if seed != sub_seed(ensemble.master_seed, index as u64) {
        return Err(bad(format!("recorded sub-seed of trajectory {index} does not match its master seed")));
    }
    let (steps, n, horizon) =
        replay_scaling(&cfg, command).ok_or_else(|| bad(format!("`{command}` runs have no trajectories")))?;

    let model = cfg.build_model()?;
    let start = lattice_start(model.dim());
    let dir: PathBuf = match out_dir {
        Some(d) => d.to_path_buf(),
        None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let write = |name: &str, body: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
        let mut buf = Vec::new();
        body(&mut buf).expect("writing to memory");
        let path = dir.join(name);
        fs::write(&path, buf).map_err(|e| CliError::io(&path, e))
    };

    // Walk step by step so that a diverging trajectory is still dumped up
    // to its last finite position.
    let traj_name = format!("replay_{index}_trajectory.csv");
    let mut walker = Walker::new(&model, &start, seed)?;
    let mut positions = vec![start.clone()];
    let mut failure = None;
    for _ in 0..steps {
        match walker.step() {
            Ok(x) => positions.push(x.to_vec()),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let traj = Trajectory::from_positions(model.dim(), seed, positions)?;
    write(&traj_name, &|buf| traj.write_csv(n, buf))?;
    if let Some(e) = failure {
        return Err(abort(e, index, seed));
    }

    let track_name = format!("replay_{index}_track.csv");
    let track = compensators(&traj, &model, n, horizon)?;
    write(&track_name, &|buf| track.write_csv(buf))?;
    let summary = summarize_trajectory(&model, &start, n, horizon, index, seed).map_err(|e| abort(e, index, seed))?;
    let y_eval = (command == Command::MarginalFit).then(|| {
        let x = traj.position(floor_steps(cfg.run.n, cfg.run.t_eval));
        x.iter().map(|c| c * c).sum::<f64>() / cfg.run.n as f64
    });

    let replay = Replay {
        index,
        sub_seed: seed,
        command,
        steps,
        n,
        horizon,
        summary,
        y_eval,
        files: vec![traj_name, track_name, format!("replay_{index}.json")],
    };
    let json = serde_json::to_string_pretty(&replay).expect("replay serializes");
    let path = dir.join(format!("replay_{index}.json"));
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(replay)
}

fn abort(e: radwalk::Error, index: usize, seed: u64) -> CliError {
    match e {
        radwalk::Error::NonFinitePosition { step, norm } => CliError::Numerical {
            index,
            seed,
            step,
            norm,
        },
        other => other.into(),
    }
}
