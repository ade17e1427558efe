use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radwalk_cli::config::{Command, ExperimentConfig, Section};
use radwalk_cli::error::{CliError, EXIT_FAIL, EXIT_PASS};

/// Seeded experiments on direction-dependent random walks.
///
/// Exit status: 0 pass, 1 criterion fail, 2 usage error, 3 numerical abort.
#[derive(Parser)]
#[command(name = "radwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the command named in the config file.
    Run(RunArgs),
    /// Check the canonical covariance field over many directions.
    Validate(RunArgs),
    /// Simulate an ensemble and record endpoints.
    Simulate(RunArgs),
    /// KS fit of Y_n(t_eval) against the squared Bessel marginal.
    MarginalFit(RunArgs),
    /// Compensator jumps, residuals and martingale check.
    Compensators(RunArgs),
    /// Escape/return classification.
    Phase(RunArgs),
    /// Moment-ratio table.
    Moments(RunArgs),
    /// Occupation fraction of a ball.
    NullOccupation(RunArgs),
    /// Regenerate one trajectory of a finished run.
    Replay {
        manifest: PathBuf,
        index: usize,
        /// Output directory (default: the manifest's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Every flag mirrors the config key of the same name and overrides it.
#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long, short)]
    config: Option<PathBuf>,

    #[arg(long = "d", help_heading = "Model")]
    d: Option<String>,
    #[arg(long = "U", help_heading = "Model")]
    radial: Option<String>,
    #[arg(long = "V", help_heading = "Model")]
    total: Option<String>,
    #[arg(long, help_heading = "Model")]
    noise: Option<String>,
    #[arg(long = "perturb_c", alias = "perturb-c", help_heading = "Model")]
    perturb_c: Option<String>,
    #[arg(long = "perturb_delta", alias = "perturb-delta", help_heading = "Model")]
    perturb_delta: Option<String>,

    #[arg(long = "n", help_heading = "Run")]
    n: Option<String>,
    #[arg(long = "T", help_heading = "Run")]
    horizon: Option<String>,
    #[arg(long = "t_eval", alias = "t-eval", help_heading = "Run")]
    t_eval: Option<String>,
    #[arg(long = "N_traj", alias = "n-traj", help_heading = "Run")]
    n_traj: Option<String>,
    #[arg(long = "N_steps", alias = "n-steps", help_heading = "Run")]
    n_steps: Option<String>,
    #[arg(long, help_heading = "Run")]
    seed: Option<String>,
    #[arg(long, help_heading = "Run")]
    workers: Option<String>,
    #[arg(long, help_heading = "Run")]
    alpha: Option<String>,
    #[arg(long, help_heading = "Run")]
    slack: Option<String>,
    #[arg(long, help_heading = "Run")]
    radius: Option<String>,
    #[arg(long, help_heading = "Run")]
    ell: Option<String>,
    /// Comma-separated grid of n or m values.
    #[arg(long, help_heading = "Run")]
    grid: Option<String>,
    #[arg(long = "n_dirs", alias = "n-dirs", help_heading = "Run")]
    n_dirs: Option<String>,
    #[arg(long, help_heading = "Run")]
    tol: Option<String>,
    #[arg(long, help_heading = "Run")]
    expect: Option<String>,

    /// Output directory (default: $RADWALK_OUT, else ./radwalk-out).
    #[arg(long, alias = "out", help_heading = "Output")]
    directory: Option<String>,
    /// Comma-separated subset of csv,jsonl.
    #[arg(long, help_heading = "Output")]
    formats: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(Section, &'static str, &String)> {
        let all = [
            (Section::Model, "d", &self.d),
            (Section::Model, "U", &self.radial),
            (Section::Model, "V", &self.total),
            (Section::Model, "noise", &self.noise),
            (Section::Model, "perturb_c", &self.perturb_c),
            (Section::Model, "perturb_delta", &self.perturb_delta),
            (Section::Run, "n", &self.n),
            (Section::Run, "T", &self.horizon),
            (Section::Run, "t_eval", &self.t_eval),
            (Section::Run, "N_traj", &self.n_traj),
            (Section::Run, "N_steps", &self.n_steps),
            (Section::Run, "seed", &self.seed),
            (Section::Run, "workers", &self.workers),
            (Section::Run, "alpha", &self.alpha),
            (Section::Run, "slack", &self.slack),
            (Section::Run, "radius", &self.radius),
            (Section::Run, "ell", &self.ell),
            (Section::Run, "grid", &self.grid),
            (Section::Run, "n_dirs", &self.n_dirs),
            (Section::Run, "tol", &self.tol),
            (Section::Run, "expect", &self.expect),
            (Section::Output, "directory", &self.directory),
            (Section::Output, "formats", &self.formats),
        ];
        all.into_iter()
            .filter_map(|(s, k, v)| v.as_ref().map(|v| (s, k, v)))
            .collect()
    }

    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                ExperimentConfig::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        for (section, key, value) in self.overrides() {
            cfg.override_field(section, key, value)?;
        }
        Ok(cfg)
    }
}

fn run(args: &RunArgs, command: Option<Command>) -> Result<i32, CliError> {
    let cfg = args.load()?;
    let result = radwalk_cli::run(&cfg, command)?;
    emit(&serde_json::to_string_pretty(&result.summary).expect("summary serializes"));
    let verdict = if result.manifest.pass { "PASS" } else { "FAIL" };
    eprintln!(
        "{} {verdict}; manifest at {}",
        result.command,
        result.directory.join(radwalk_cli::manifest::MANIFEST_FILE).display()
    );
    Ok(if result.manifest.pass { EXIT_PASS } else { EXIT_FAIL })
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Cmd::Run(a) => run(&a, None),
        Cmd::Validate(a) => run(&a, Some(Command::Validate)),
        Cmd::Simulate(a) => run(&a, Some(Command::Simulate)),
        Cmd::MarginalFit(a) => run(&a, Some(Command::MarginalFit)),
        Cmd::Compensators(a) => run(&a, Some(Command::Compensators)),
        Cmd::Phase(a) => run(&a, Some(Command::Phase)),
        Cmd::Moments(a) => run(&a, Some(Command::Moments)),
        Cmd::NullOccupation(a) => run(&a, Some(Command::NullOccupation)),
        Cmd::Replay { manifest, index, out } => {
            let replay = radwalk_cli::replay::replay(&manifest, index, out.as_deref())?;
            emit(&serde_json::to_string_pretty(&replay).expect("replay serializes"));
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}
