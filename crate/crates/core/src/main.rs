use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qkd_core::cli::{execute, load_config, Command, SEED_ENV};

#[derive(Parser)]
#[command(name = "qkd", version, about = "Time-bin phase-encoded QKD link simulator")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Model (and optional Monte Carlo) rates versus fiber length, as CSV
    Sweep(Common),
    /// Run a two-party key exchange
    Session(Common),
    /// Calibrate dark counts against the published anchors
    Calibrate(Common),
    /// Print the distance limit for the configuration
    Analyze(Common),
}

#[derive(clap::Args)]
struct Common {
    /// key=value configuration file
    config: PathBuf,
    /// Extra key=value setting, applied after the file
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (command, common) = match args.command {
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Session(c) => (Command::Session, c),
        Cmd::Calibrate(c) => (Command::Calibrate, c),
        Cmd::Analyze(c) => (Command::Analyze, c),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return ExitCode::from(1);
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let result = load_config(&text, &common.set, env_seed.as_deref()).and_then(|cfg| {
        execute(command, &cfg, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
