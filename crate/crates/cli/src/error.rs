use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Exit status of a run whose pass criteria all held.
pub const EXIT_PASS: i32 = 0;
/// Exit status when a pass criterion failed.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for bad arguments, configs or manifests.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when a trajectory diverged.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", config_message(.line, .field, .reason))]
    Config {
        line: Option<usize>,
        field: String,
        reason: String,
    },

    #[error(
        "numerical abort in trajectory {index} (sub-seed {seed}) at step {step}, norm {norm:e}; \
         rerun with `radwalk replay <manifest> {index}`"
    )]
    Numerical {
        index: usize,
        seed: u64,
        step: usize,
        norm: f64,
    },

    #[error("{0}")]
    Model(radwalk::Error),

    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn config_message(line: &Option<usize>, field: &str, reason: &str) -> String {
    match line {
        Some(line) => format!("config line {line}, field `{field}`: {reason}"),
        None => format!("field `{field}`: {reason}"),
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<radwalk::Error> for CliError {
    fn from(e: radwalk::Error) -> Self {
        match e {
            radwalk::Error::TrajectoryAbort {
                index,
                seed,
                step,
                norm,
            } => CliError::Numerical {
                index,
                seed,
                step,
                norm,
            },
            other => CliError::Model(other),
        }
    }
}
