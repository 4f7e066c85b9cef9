//! `session` subcommand: one role over TCP, or both roles in-process.

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::time::Instant;

use crate::bits::{pack_bits, to_hex};
use crate::cli::config::{RunConfig, TransportSpec};
use crate::cli::CliError;
use crate::session::transport::StreamTransport;
use crate::session::{run_inproc, run_session, Role, SessionResult, SessionStatus};

fn status_name(s: SessionStatus) -> &'static str {
    match s {
        SessionStatus::Success => "success",
        SessionStatus::ZeroKey => "zero_key",
        SessionStatus::InsufficientData => "insufficient_data",
    }
}

pub fn summary(r: &SessionResult, elapsed_s: f64) -> String {
    let role = match r.role {
        Role::Alice => "alice",
        Role::Bob => "bob",
    };
    let qber = r.qber.map(|q| q.to_string()).unwrap_or_else(|| "none".into());
    let hash = r
        .key_hash
        .map(|h| format!("{h:016x}"))
        .unwrap_or_else(|| "none".into());
    format!(
        "role={role}\nstatus={}\nn_clocks={}\ndetections={}\nsifted_bits={}\nsample_bits={}\n\
         qber={qber}\nleaked_ec={}\nfinal_bits={}\nkey_hash={hash}\nelapsed_s={elapsed_s:.3}\n",
        status_name(r.status),
        r.n_clocks,
        r.detections,
        r.sifted_bits,
        r.sample_bits,
        r.leaked_ec,
        r.final_bits,
    )
}

fn write_key(cfg: &RunConfig, r: &SessionResult) -> Result<(), CliError> {
    let Some(path) = &cfg.output else {
        return Ok(());
    };
    if r.status != SessionStatus::Success {
        return Ok(());
    }
    std::fs::write(path, format!("{}\n", to_hex(&pack_bits(&r.final_key))))
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Runs the configured session, prints the summary and writes the key file.
pub fn run_two_party<W: Write + ?Sized, E: Write + ?Sized>(
    cfg: &RunConfig,
    stdout: &mut W,
    stderr: &mut E,
) -> Result<SessionResult, CliError> {
    if cfg.n_clocks == 0 {
        return Err(CliError::Config("session needs n_clocks > 0".into()));
    }
    let session = cfg.session_config(cfg.length_km, cfg.n_clocks, cfg.seed);
    let started = Instant::now();
    let result = match &cfg.transport {
        TransportSpec::Inproc => run_inproc(&session)?.0,
        TransportSpec::Listen(addr) => {
            let listener = TcpListener::bind(addr)?;
            writeln!(stderr, "listening={}", listener.local_addr()?)?;
            stderr.flush()?;
            let (stream, _) = listener.accept()?;
            drop(listener);
            let mut t = StreamTransport::tcp(stream)?;
            run_session(&session, Role::Alice, &mut t)?
        }
        TransportSpec::Connect(addr) => {
            let stream = TcpStream::connect(addr.as_str())
                .map_err(|e| CliError::Connect(format!("{addr}: {e}")))?;
            let mut t = StreamTransport::tcp(stream)?;
            run_session(&session, Role::Bob, &mut t)?
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    write_key(cfg, &result)?;
    stdout.write_all(summary(&result, elapsed).as_bytes())?;
    Ok(result)
}
