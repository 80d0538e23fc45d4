//! Experiment runner behind the `purigan` binary.
//!
//! Verbs: `verify`, `train`, `sweep`, `tasks`, `contaminate`. Each reads an
//! optional TOML config (see [`config::ExperimentConfig`]), writes CSV (and
//! for `train` an SVG) into the output directory together with
//! `effective_config.toml`, and maps failures onto exit codes:
//! 0 success, 1 runtime failure, 2 usage or config error.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use config::{ExperimentConfig, PolicyKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, Parser)]
#[command(name = "purigan", version, about = "Least-squares GANs trained on contaminated data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config; defaults are used for anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel suites and sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fill the `runtime_ms` column of verification CSVs (makes them non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Exact minimizer checks on finite supports.
    Verify {
        #[arg(long)]
        theorem: Option<u8>,
    },
    /// Train one model and write checkpoint, history, metrics and a scatter plot.
    Train,
    /// Train over a grid of contamination settings and aggregate metrics.
    Sweep,
    /// Anomaly scores and PU labels from a trained checkpoint.
    Tasks {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
    },
    /// Build and save a contaminated dataset.
    Contaminate,
}

/// What a command printed and how it ended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub stdout: Vec<String>,
    pub stderr: Vec<String>,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.exit_code == EXIT_OK
    }
}

/// A failed command: exit code plus message.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Argument(_) | Error::Checkpoint { .. } => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

/// Output collected while a command runs.
#[derive(Debug, Default)]
pub struct Log {
    pub stdout: Vec<String>,
    pub stderr: Vec<String>,
}

impl Log {
    pub fn info(&mut self, line: impl Into<String>) {
        self.stdout.push(line.into());
    }

    pub fn warn(&mut self, line: impl Into<String>) {
        self.stderr.push(format!("warning: {}", line.into()));
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Command::Verify { theorem: Some(t) } = cli.command {
        cfg.verify.theorem = t;
    }
    if let Command::Tasks { checkpoint, policy } = &cli.command {
        if let Some(c) = checkpoint {
            cfg.tasks.checkpoint = Some(c.clone());
        }
        if let Some(p) = policy {
            cfg.tasks.policy = *p;
        }
    }
    Ok(cfg.effective())
}

fn prepare_output(cfg: &ExperimentConfig, force: bool) -> Result<PathBuf, CliError> {
    let dir = cfg.output.dir.clone();
    if dir.exists() {
        let non_empty = std::fs::read_dir(&dir)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", dir.display())))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::usage(format!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(&dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    std::fs::write(dir.join(EFFECTIVE_CONFIG_FILE), cfg.to_toml())
        .map_err(|e| CliError::runtime(format!("cannot write effective config: {e}")))?;
    Ok(dir)
}

fn dispatch(cli: &Cli, log: &mut Log) -> Result<i32, CliError> {
    let cfg = load_config(cli)?;
    // Validate what can be checked before touching the filesystem.
    commands::precheck(&cli.command, &cfg)?;
    let dir = prepare_output(&cfg, cli.force)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Verify { .. } => commands::cmd_verify(&cfg, &dir, cli.timing, log),
        Command::Train => commands::cmd_train(&cfg, &dir, log),
        Command::Sweep => commands::cmd_sweep(&cfg, &dir, log),
        Command::Tasks { .. } => commands::cmd_tasks(&cfg, &dir, log),
        Command::Contaminate => commands::cmd_contaminate(&cfg, &dir, log),
    })
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Outcome {
    let mut log = Log::default();
    let exit_code = match dispatch(cli, &mut log) {
        Ok(code) => code,
        Err(e) => {
            log.stderr.push(format!("error: {}", e.message));
            e.code
        }
    };
    Outcome { exit_code, stdout: log.stdout, stderr: log.stderr }
}

/// Parses `args` (including the program name) and runs. Parse failures exit 2.
pub fn run_from_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                Outcome { exit_code: code, stdout: vec![text], stderr: vec![] }
            } else {
                Outcome { exit_code: code, stdout: vec![], stderr: vec![text] }
            }
        }
    }
}
