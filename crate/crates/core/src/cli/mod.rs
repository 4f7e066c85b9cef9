//! Command-line front end for the `qkd` binary.
//!
//! Subcommands: `sweep`, `session`, `calibrate`, `analyze`, each reading a
//! `key=value` configuration. Exit codes: 0 success or clean zero-key run,
//! 1 configuration error, 2 transport or protocol failure, 3 key-hash mismatch.

pub mod config;
pub mod sweep;
pub mod two_party;

use std::io::Write;

use thiserror::Error;

use crate::analysis::{
    calibrate_dark, calibrate_dark_from_limit, distance_limit, qber_model, AnalysisError, DistanceLimit, ReferenceAnchors,
};
use crate::detector::fit_dark_model;
use crate::postproc::entropy::security_limit_qber;
use crate::session::SessionError;

pub use config::{parse_config, ConfigError, RunConfig, TransportSpec};
pub use sweep::{run_sweep, sweep_rows, SweepRow, CSV_HEADER};
pub use two_party::run_two_party;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "QKD_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("connect {0}")]
    Connect(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write output {0}")]
    Output(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn session_exit_code(e: &SessionError) -> u8 {
    match e {
        SessionError::Param(_) | SessionError::ParamsMismatch => 1,
        SessionError::KeyMismatch => 3,
        _ => 2,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 1,
            CliError::Analysis(AnalysisError::Session(e)) | CliError::Session(e) => {
                session_exit_code(e)
            }
            CliError::Analysis(_) => 1,
            CliError::Connect(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sweep,
    Session,
    Calibrate,
    Analyze,
}

fn line_key(line: &str) -> Option<&str> {
    let content = line.split('#').next()?;
    content.split_once('=').map(|(k, _)| k.trim())
}

/// Parses `text` with `overrides` (`key=value`) replacing any file setting of
/// the same key, then applies [`SEED_ENV`].
pub fn load_config(
    text: &str,
    overrides: &[String],
    env_seed: Option<&str>,
) -> Result<RunConfig, CliError> {
    let overridden: Vec<&str> = overrides.iter().filter_map(|o| line_key(o)).collect();
    // blank replaced lines so error line numbers still match the file
    let mut full = String::new();
    for line in text.lines() {
        if !line_key(line).is_some_and(|k| overridden.contains(&k)) {
            full.push_str(line);
        }
        full.push('\n');
    }
    for o in overrides {
        full.push_str(o);
        full.push('\n');
    }
    let mut cfg = parse_config(&full)?;
    if let Some(s) = env_seed {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{s}` is not an integer")))?;
    }
    Ok(cfg)
}

fn calibrate<W: Write + ?Sized>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let a = ReferenceAnchors::default();
    let p = &cfg.system;
    let d_low = calibrate_dark(p, a.qe_low, a.qber_length_km, a.qber_at_length)?;
    let d_high = calibrate_dark_from_limit(p, a.qe_high, a.limit_km)?;
    let model = fit_dark_model((a.qe_low, d_low), (a.qe_high, d_high)).map_err(AnalysisError::from)?;
    writeln!(out, "anchor_low=qe:{},length_km:{},qber:{}", a.qe_low, a.qber_length_km, a.qber_at_length)?;
    writeln!(out, "dark_low={d_low}")?;
    writeln!(out, "anchor_high=qe:{},limit_km:{}", a.qe_high, a.limit_km)?;
    writeln!(out, "dark_high={d_high}")?;
    writeln!(out, "dark_ratio={}", d_high / d_low)?;
    writeln!(out, "model_a={}", model.a)?;
    writeln!(out, "model_b={}", model.b)?;
    writeln!(out, "qe={}", p.qe())?;
    writeln!(out, "dark_at_qe={}", model.eval(p.qe()))?;
    Ok(())
}

fn analyze<W: Write + ?Sized>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let p = &cfg.system;
    writeln!(out, "qe={}", p.qe())?;
    writeln!(out, "dark_per_gate={}", p.detector.dark_per_gate)?;
    writeln!(out, "security_limit_qber={}", security_limit_qber(1.0))?;
    writeln!(out, "qber_at_length={}", qber_model(p, cfg.length_km)?)?;
    match distance_limit(p)? {
        DistanceLimit::Finite(km) => writeln!(out, "distance_limit_km={km}")?,
        DistanceLimit::Unbounded => writeln!(out, "distance_limit_km=unbounded")?,
    }
    Ok(())
}

pub fn execute<W: Write + ?Sized, E: Write + ?Sized>(
    command: Command,
    cfg: &RunConfig,
    stdout: &mut W,
    stderr: &mut E,
) -> Result<(), CliError> {
    match command {
        Command::Sweep => run_sweep(cfg, stdout),
        Command::Session => run_two_party(cfg, stdout, stderr).map(|_| ()),
        Command::Calibrate => calibrate(cfg, stdout),
        Command::Analyze => analyze(cfg, stdout),
    }
}
