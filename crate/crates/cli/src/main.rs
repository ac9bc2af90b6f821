//! `arm`: simulate, sweep, analyze and calibrate modular soft arms.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 numerical failure.

mod analyze;
mod calibrate;
mod output;
mod simulate;
mod svg;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use softarm::config::ProjectConfig;

#[derive(Parser)]
#[command(name = "arm", version, about = "Modular tendon-driven soft arm toolkit")]
struct Cli {
    /// Project configuration (JSON).
    #[arg(long, global = true, default_value = "arm.json")]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static equilibrium under tendon pulls, gravity and a tip payload.
    Simulate(simulate::SimulateArgs),
    /// Constant-curvature workspace sweep and metrics.
    Workspace(sweep::WorkspaceArgs),
    /// Motion-capture analysis.
    Analyze(AnalyzeArgs),
    /// Fit a material to measured observations.
    Calibrate(calibrate::CalibrateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    what: analyze::AnalyzeCommand,
}

pub enum CliError {
    Usage(String),
    Core(softarm::Error),
}

impl From<softarm::Error> for CliError {
    fn from(e: softarm::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Context shared by every command.
pub struct Ctx {
    pub config: ProjectConfig,
    pub config_path: PathBuf,
    pub out: PathBuf,
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("ARM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("ARM_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    let config = ProjectConfig::load(&cli.config)?;
    let ctx = Ctx {
        config,
        config_path: cli.config,
        out: cli.out,
    };
    match cli.command {
        Command::Simulate(a) => simulate::run(&ctx, &a),
        Command::Workspace(a) => sweep::run(&ctx, &a),
        Command::Analyze(a) => analyze::run(&ctx, &a.what),
        Command::Calibrate(a) => calibrate::run(&ctx, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
