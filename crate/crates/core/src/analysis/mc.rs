//! Monte Carlo checks of the closed-form model.

use crate::analysis::{qber_model, signal_per_clock, AnalysisError, SystemParams};
use crate::channel::{db_to_fraction, propagate, ChannelParams};
use crate::rng::{stream_rng, Stream};
use crate::session::sift::{bb84_keep, sarg04_decide};
use crate::session::station::{alice_emit, BobStation};
use crate::session::{run_inproc, Protocol, SessionConfig, SessionResult};

/// Counts from a simulated quantum exchange with ideal sifting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkStats {
    pub clocks: u64,
    pub detections: u64,
    pub sifted: u64,
    pub errors: u64,
    pub outer_slot_photons: u64,
}

impl LinkStats {
    pub fn qber(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64)
    }
}

/// Runs the per-clock exchange without the classical protocol or record storage.
///
/// Uses the same primitives and random streams as a session with this seed,
/// so it sees exactly the detections that session would.
pub fn simulate_link(
    p: &SystemParams,
    length_km: f64,
    n_clocks: u64,
    seed: u64,
) -> Result<LinkStats, AnalysisError> {
    p.validate()?;
    let channel = ChannelParams::new(length_km, p.alpha_db_per_km)?;
    let mut alice_rng = stream_rng(seed, Stream::Alice);
    let mut bob_rng = stream_rng(seed, Stream::Bob);
    let mut station = BobStation::new(p.optics, p.detector);
    let loss = db_to_fraction(p.alice_loss_db);
    let mut stats = LinkStats {
        clocks: n_clocks,
        ..LinkStats::default()
    };
    for clock in 0..n_clocks {
        let (a, mut pulse) = alice_emit(&mut alice_rng, p.mu, clock)?;
        pulse.mean_photons = p.mu * loss;
        let pulse = propagate(pulse, &channel);
        let Some(b) = station.receive(&pulse, &mut bob_rng)? else {
            continue;
        };
        stats.detections += 1;
        let pair = match p.protocol {
            Protocol::Bb84 => bb84_keep(a.b2, b.b3).then_some((a.b1, b.port)),
            Protocol::Sarg04 => sarg04_decide(a.b1, b.b3, b.port).map(|bit| (a.b2, bit)),
        };
        if let Some((x, y)) = pair {
            stats.sifted += 1;
            stats.errors += u64::from(x != y);
        }
    }
    stats.outer_slot_photons = station.outer_slot_photons;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStatus {
    Ok,
    /// Fewer than [`MIN_EXPECTED_SIFTED`] sifted bits were expected.
    InsufficientStatistics,
}

pub const MIN_EXPECTED_SIFTED: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub status: McStatus,
    pub length_km: f64,
    pub n_clocks: u64,
    pub model_sifted_per_clock: f64,
    pub model_qber: f64,
    pub sifted_bits: u64,
    /// Mismatches between the two full sifted keys.
    pub sifted_errors: u64,
    pub measured_qber: Option<f64>,
    pub measured_sifted_bps: f64,
    pub final_bps: f64,
    pub z_rate: f64,
    pub z_qber: f64,
    pub alice: SessionResult,
}

/// Runs a full in-process session and scores it against the model.
pub fn mc_vs_model(
    p: &SystemParams,
    length_km: f64,
    n_clocks: u64,
    seed: u64,
) -> Result<McReport, AnalysisError> {
    let cfg = SessionConfig::new(*p, length_km, n_clocks, seed);
    let (alice, bob) = run_inproc(&cfg)?;
    let n = n_clocks as f64;
    let per_clock = signal_per_clock(p, length_km)? + p.detector.dark_per_gate;
    let q_model = qber_model(p, length_km)?;
    let sifted = alice.sifted_bits;
    let errors = alice.sifted_key.mismatches(&bob.sifted_key) as u64;
    let measured_qber = (sifted > 0).then(|| errors as f64 / sifted as f64);

    let expected = n * per_clock;
    let z_rate = (sifted as f64 - expected) / expected.sqrt();
    let z_qber = match measured_qber {
        Some(q) => (q - q_model) / (q_model * (1.0 - q_model) / sifted as f64).sqrt(),
        None => f64::NAN,
    };
    Ok(McReport {
        status: if expected >= MIN_EXPECTED_SIFTED {
            McStatus::Ok
        } else {
            McStatus::InsufficientStatistics
        },
        length_km,
        n_clocks,
        model_sifted_per_clock: per_clock,
        model_qber: q_model,
        sifted_bits: sifted,
        sifted_errors: errors,
        measured_qber,
        measured_sifted_bps: sifted as f64 * p.clock_hz / n,
        final_bps: alice.final_bits as f64 * p.clock_hz / n,
        z_rate,
        z_qber,
        alice,
    })
}
