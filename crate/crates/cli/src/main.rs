//! `macf`: simulator and verification suite driver.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration error,
//! 3 blow-up, 4 a verdict failed.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Run, Verdict};
use config::{Config, ConfigError};
use manifest::RunManifest;

const EXIT_VERDICT_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "macf", version, about = "Spectral simulator and verification suite for the stochastic Allen-Cahn equation with mobility")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config, or a `manifest.json` from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "macf-out")]
    out: PathBuf,

    /// Overrides `noise.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// One trajectory: NDJSON diagnostics and the final state.
    Simulate,
    /// Monte Carlo moments, optionally across outer step counts.
    Ensemble,
    /// Shared-noise refinement study along one parameter.
    Converge,
    /// Shared versus independent noise coupling.
    Couple,
    /// Martingale characterization test.
    Mgtest,
    /// Frozen-mobility operator and semigroup checks.
    Semigroup,
    /// Structural assumptions on the potential, mobility and kernel.
    CheckModel,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Ensemble => "ensemble",
            Self::Converge => "converge",
            Self::Couple => "couple",
            Self::Mgtest => "mgtest",
            Self::Semigroup => "semigroup",
            Self::CheckModel => "check-model",
        }
    }
}

fn load(cli: &Cli) -> Result<Config, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config(ConfigError::new("", "--config PATH is required")))?;
    let mut config = Config::load(path)?;
    if let Some(seed) = cli.seed {
        config.noise.seed = seed;
    }
    if let Ok(v) = std::env::var("MACF_THREADS") {
        let threads = v
            .parse::<usize>()
            .ok()
            .filter(|t| *t > 0)
            .ok_or_else(|| CliError::Config(ConfigError::new("runtime.threads", format!("MACF_THREADS={v:?} is not a positive integer"))))?;
        config.runtime.threads = Some(threads);
    }
    if config.runtime.threads == Some(0) {
        return Err(ConfigError::new("runtime.threads", "must be at least 1").into());
    }
    Ok(config)
}

fn execute(run: &mut Run, command: Command) -> Result<Vec<Verdict>, CliError> {
    match command {
        Command::Simulate => commands::simulate(run),
        Command::Ensemble => commands::ensemble(run),
        Command::Converge => commands::converge(run),
        Command::Couple => commands::couple(run),
        Command::Mgtest => commands::mgtest(run),
        Command::Semigroup => commands::semigroup(run),
        Command::CheckModel => commands::check_model(run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(t) = config.threads() {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    if let Err(e) = commands::ensure_dir(&cli.out) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let mut manifest = RunManifest::begin(cli.command.name(), &config, rayon::current_num_threads());
    if let Err(e) = manifest.write(&cli.out) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    let mut run = Run {
        config,
        dir: cli.out.clone(),
        outputs: Vec::new(),
        steps: None,
        quiet: cli.quiet,
    };
    let (code, message) = match execute(&mut run, cli.command) {
        Ok(verdicts) => {
            for v in &verdicts {
                println!("{v}");
            }
            if verdicts.iter().all(|v| v.pass) {
                (0, None)
            } else {
                (EXIT_VERDICT_FAILED, Some("verdict failed".to_owned()))
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            (e.exit_code(), Some(e.to_string()))
        }
    };
    manifest.outputs = run.outputs;
    manifest.finish(code, message, run.steps);
    if let Err(e) = manifest.write(&cli.out) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code as u8)
}
