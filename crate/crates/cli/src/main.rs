use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wass_dro_cli::{execute, Invocation, Mode, EXIT_ERROR};

#[derive(Parser)]
#[command(
    name = "wass-dro",
    version,
    about = "Wasserstein-regularized DRO solver and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the outer solver and write traces.
    Run(Common),
    /// Run the configured probes and write probes.json.
    Diagnose(Common),
    /// Run one solve per sweep value.
    Sweep(Common),
    /// Print the exact W2² between two CSV clouds.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Concurrent sweep branches.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WASS_DRO_LOG", "error")).init();
    let (mode, c) = match cli.command {
        Command::Run(c) => (Mode::Run, c),
        Command::Diagnose(c) => (Mode::Diagnose, c),
        Command::Sweep(c) => (Mode::Sweep, c),
        Command::Oracle(c) => (Mode::Oracle, c),
    };
    let inv = Invocation {
        mode,
        config: c.config,
        output: c.output,
        jobs: c.jobs,
        seed: c.seed,
    };
    let code = match execute(&inv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
