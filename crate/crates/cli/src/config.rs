//! Experiment configuration: flat `key = value` lines grouped under
//! `[model]`, `[run]` and `[output]` headers. A bare `command = …` line may
//! precede the first header.
//!
//! ```text
//! command = marginal-fit
//!
//! [model]
//! d = 2
//! U = 1
//! V = 3
//!
//! [run]
//! n = 4096
//! N_traj = 1000
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use radwalk::covariance::{ModelSpec, WalkModel};
use radwalk::ensemble::{EnsembleConfig, DEFAULT_SEED};
use radwalk::stats::{Phase, DEFAULT_ALPHA, DEFAULT_PHASE_RADIUS, KS_SLACK};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "RADWALK_OUT";

/// Output directory used when neither the config, a flag nor the
/// environment names one.
pub const FALLBACK_OUTPUT: &str = "radwalk-out";

/// Ball radius of `null-occupation` when `radius` is not set.
pub const DEFAULT_OCCUPATION_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Simulate,
    MarginalFit,
    Compensators,
    Phase,
    Moments,
    NullOccupation,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Validate,
        Command::Simulate,
        Command::MarginalFit,
        Command::Compensators,
        Command::Phase,
        Command::Moments,
        Command::NullOccupation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::MarginalFit => "marginal-fit",
            Command::Compensators => "compensators",
            Command::Phase => "phase",
            Command::Moments => "moments",
            Command::NullOccupation => "null-occupation",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
                format!("unknown command `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

/// `[run]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub t_eval: f64,
    #[serde(rename = "N_traj")]
    pub n_traj: usize,
    #[serde(rename = "N_steps")]
    pub n_steps: usize,
    pub seed: u64,
    pub workers: usize,
    pub alpha: f64,
    pub slack: f64,
    /// Phase ball radius, or the occupation ball radius `C`.
    pub radius: Option<f64>,
    /// Moment order `ℓ`.
    pub ell: u32,
    /// `m` grid of `moments`, `n` grid of `null-occupation`, or the
    /// scaling indices of a `marginal-fit` trend.
    pub grid: Option<Vec<usize>>,
    pub n_dirs: usize,
    pub tol: f64,
    /// Expected phase verdict; `phase` fails when the verdict differs.
    pub expect: Option<Phase>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            n: 4096,
            horizon: 1.0,
            t_eval: 1.0,
            n_traj: 1000,
            n_steps: 100_000,
            seed: DEFAULT_SEED,
            workers: 0,
            alpha: DEFAULT_ALPHA,
            slack: KS_SLACK,
            radius: None,
            ell: 4,
            grid: None,
            n_dirs: 1000,
            tol: 1e-10,
            expect: None,
        }
    }
}

impl RunSpec {
    pub const KEYS: [&'static str; 15] = [
        "n", "T", "t_eval", "N_traj", "N_steps", "seed", "workers", "alpha", "slack", "radius", "ell",
        "grid", "n_dirs", "tol", "expect",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "n" => self.n = parse(key, value)?,
            "T" => self.horizon = parse(key, value)?,
            "t_eval" => self.t_eval = parse(key, value)?,
            "N_traj" => self.n_traj = parse(key, value)?,
            "N_steps" => self.n_steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "slack" => self.slack = parse(key, value)?,
            "radius" => self.radius = Some(parse(key, value)?),
            "ell" => self.ell = parse(key, value)?,
            "grid" => self.grid = Some(parse_list(key, value)?),
            "n_dirs" => self.n_dirs = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "expect" => {
                self.expect = Some(match value {
                    "transient-consistent" => Phase::TransientConsistent,
                    "recurrent-consistent" => Phase::RecurrentConsistent,
                    "inconclusive" => Phase::Inconclusive,
                    other => return Err(format!("unknown phase verdict `{other}`")),
                })
            }
            other => return Err(format!("unknown run key `{other}`")),
        }
        Ok(())
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_traj: self.n_traj,
            seed: self.seed,
            workers: self.workers,
        }
    }
}

/// `[output]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Jsonl],
        }
    }
}

impl OutputSpec {
    pub const KEYS: [&'static str; 2] = ["directory", "formats"];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "directory" => self.directory = Some(PathBuf::from(value)),
            "formats" => {
                let mut formats = value
                    .split(',')
                    .map(|f| f.trim())
                    .filter(|f| !f.is_empty())
                    .map(Format::from_str)
                    .collect::<Result<Vec<_>, _>>()?;
                formats.sort();
                formats.dedup();
                self.formats = formats;
            }
            other => return Err(format!("unknown output key `{other}`")),
        }
        Ok(())
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    /// Flag or file value, then `$RADWALK_OUT`, then `radwalk-out`.
    pub fn resolve_directory(&self) -> PathBuf {
        self.directory
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Model,
    Run,
    Output,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "model" => Some(Section::Model),
            "run" => Some(Section::Run),
            "output" => Some(Section::Output),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Section::Model => "model",
            Section::Run => "run",
            Section::Output => "output",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub model: ModelSpec,
    pub run: RunSpec,
    pub output: OutputSpec,
    /// Source line of each `section.key`, for diagnostics.
    #[serde(skip)]
    lines: BTreeMap<String, usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut section = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(Section::parse(name.trim()).ok_or_else(|| CliError::Config {
                    line: Some(line),
                    field: name.trim().to_string(),
                    reason: "unknown section (expected [model], [run] or [output])".into(),
                })?);
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::Config {
                line: Some(line),
                field: content.to_string(),
                reason: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let result = match section {
                None if key == "command" => value.parse().map(|c| cfg.command = Some(c)),
                None => Err(format!("`{key}` must appear under a section header")),
                Some(s) => cfg.set(s, key, value),
            };
            result.map_err(|reason| CliError::Config {
                line: Some(line),
                field: qualified(section, key),
                reason,
            })?;
            cfg.lines.insert(qualified(section, key), line);
        }
        Ok(cfg)
    }

    /// Sets one field; used by the file parser and by command-line flags.
    pub fn set(&mut self, section: Section, key: &str, value: &str) -> Result<(), String> {
        match section {
            Section::Model => self.model.set(key, value),
            Section::Run => self.run.set(key, value),
            Section::Output => self.output.set(key, value),
        }
    }

    /// Applies a flag override; flags carry no source line.
    pub fn override_field(&mut self, section: Section, key: &str, value: &str) -> Result<(), CliError> {
        self.set(section, key, value).map_err(|reason| CliError::Config {
            line: None,
            field: qualified(Some(section), key),
            reason,
        })?;
        self.lines.remove(&qualified(Some(section), key));
        Ok(())
    }

    /// Builds the walk model, attributing failures to the offending field.
    pub fn build_model(&self) -> Result<WalkModel, CliError> {
        self.model.build().map_err(|e| match &e {
            radwalk::Error::InvalidParameter { name, reason } => {
                self.field_error(Section::Model, name, reason.clone())
            }
            _ => CliError::from(e),
        })
    }

    /// Config error for `section.key`, with its source line when known.
    pub fn field_error(&self, section: Section, key: &str, reason: impl Into<String>) -> CliError {
        let field = qualified(Some(section), key);
        CliError::Config {
            line: self.lines.get(&field).copied(),
            field,
            reason: reason.into(),
        }
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| CliError::Config {
            line: None,
            field: "command".into(),
            reason: "no command given in the config or on the command line".into(),
        })
    }

    /// Canonical text form with every field spelled out; parsing it gives
    /// back an identical config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(c) = self.command {
            out.push_str(&format!("command = {c}\n\n"));
        }
        let m = &self.model;
        out.push_str("[model]\n");
        out.push_str(&format!("d = {}\n", m.d));
        out.push_str(&format!("U = {:?}\n", m.radial));
        out.push_str(&format!("V = {:?}\n", m.total));
        out.push_str(&format!("noise = {}\n", m.noise));
        out.push_str(&format!("perturb_c = {:?}\n", m.perturb_c));
        out.push_str(&format!("perturb_delta = {:?}\n", m.perturb_delta));
        let r = &self.run;
        out.push_str("\n[run]\n");
        out.push_str(&format!("n = {}\n", r.n));
        out.push_str(&format!("T = {:?}\n", r.horizon));
        out.push_str(&format!("t_eval = {:?}\n", r.t_eval));
        out.push_str(&format!("N_traj = {}\n", r.n_traj));
        out.push_str(&format!("N_steps = {}\n", r.n_steps));
        out.push_str(&format!("seed = {}\n", r.seed));
        out.push_str(&format!("workers = {}\n", r.workers));
        out.push_str(&format!("alpha = {:?}\n", r.alpha));
        out.push_str(&format!("slack = {:?}\n", r.slack));
        if let Some(radius) = r.radius {
            out.push_str(&format!("radius = {radius:?}\n"));
        }
        out.push_str(&format!("ell = {}\n", r.ell));
        if let Some(grid) = &r.grid {
            let cells: Vec<String> = grid.iter().map(|g| g.to_string()).collect();
            out.push_str(&format!("grid = {}\n", cells.join(",")));
        }
        out.push_str(&format!("n_dirs = {}\n", r.n_dirs));
        out.push_str(&format!("tol = {:?}\n", r.tol));
        if let Some(expect) = r.expect {
            let name = match expect {
                Phase::TransientConsistent => "transient-consistent",
                Phase::RecurrentConsistent => "recurrent-consistent",
                Phase::Inconclusive => "inconclusive",
            };
            out.push_str(&format!("expect = {name}\n"));
        }
        out.push_str("\n[output]\n");
        if let Some(dir) = &self.output.directory {
            out.push_str(&format!("directory = {}\n", dir.display()));
        }
        let formats: Vec<String> = self.output.formats.iter().map(|f| f.to_string()).collect();
        out.push_str(&format!("formats = {}\n", formats.join(",")));
        out
    }

    /// Radius for `phase` or `null-occupation`, with the command default.
    pub fn radius(&self, command: Command) -> f64 {
        self.run.radius.unwrap_or(match command {
            Command::NullOccupation => DEFAULT_OCCUPATION_RADIUS,
            _ => DEFAULT_PHASE_RADIUS,
        })
    }

    /// Grid for `moments` (`16, 32, …, 16384`) or `null-occupation`
    /// (`256, …, 4096`) when `grid` is not set.
    pub fn grid(&self, command: Command) -> Vec<usize> {
        if let Some(grid) = &self.run.grid {
            return grid.clone();
        }
        let (lo, hi) = match command {
            Command::NullOccupation => (8, 12),
            _ => (4, 14),
        };
        (lo..=hi).map(|p| 1usize << p).collect()
    }
}

fn qualified(section: Option<Section>, key: &str) -> String {
    match section {
        Some(s) => format!("{}.{key}", s.name()),
        None => key.to_string(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("`{key}` cannot parse `{value}`"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}
