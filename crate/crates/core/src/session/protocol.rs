//! Two-party session: handshake, quantum exchange, sifting and distillation.
//!
//! Message order (A = Alice, B = Bob):
//!
//! ```text
//! A→B HELLO            B→A HELLO
//! A→B PARAMS digest    B→A PARAMS digest (or ABORT on mismatch)
//! A→B QUANTUM_PULSES … (simulation stand-in for the fiber)
//! B→A DETECTIONS       A→B BASIS_REVEAL     B→A SIFT_RESULT
//! A→B QBER_SAMPLE      B→A QBER_RESULT
//! Cascade: A→B SHUFFLE_SEED, B→A PARITIES, A→B PARITY_REPLY …
//! A→B PA_SEED          B→A KEY_HASH         A→B KEY_HASH (or ABORT)
//! ```
//!
//! Both roles derive their randomness from one seed through separate streams,
//! so a seeded run gives the same keys over any transport.

use rand::RngCore;
use thiserror::Error;

use crate::analysis::SystemParams;
use crate::bits::{fnv1a64, key_hash};
use crate::channel::{db_to_fraction, propagate, ChannelParams};
use crate::optics::{EncodedPulse, Phase, Slot};
use crate::postproc::cascade::{cascade_correct_remote, cascade_serve, CascadeParams};
use crate::postproc::entropy::{final_key_length, secret_fraction};
use crate::postproc::qber::{choose_sample, remove_positions, SampleRule};
use crate::postproc::toeplitz::{privacy_amplify, PaParams};
use crate::postproc::PostprocError;
use crate::rng::{stream_rng, SimRng, Stream};
use crate::session::frame::FrameError;
use crate::session::messages::Message;
use crate::session::sift::{bb84_keep, sarg04_decide, sarg04_keep};
use crate::session::station::{alice_emit, BobStation};
use crate::session::transport::{memory_pair, Transport, TransportError};
use crate::session::{Protocol, SiftedKey};
use crate::{Bit, ParamError};

pub const PROTOCOL_VERSION: u16 = 1;
/// Clocks per QUANTUM_PULSES frame.
pub const PULSE_BATCH: u64 = 1 << 16;

const PARAMS_MISMATCH: &str = "parameter mismatch";
const KEY_MISMATCH: &str = "key hash mismatch";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Success,
    /// The estimated QBER or the leakage left nothing to distill.
    ZeroKey,
    /// Too few sifted bits to estimate the QBER and keep any.
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillParams {
    pub cascade_passes: u32,
    pub k1_coefficient: f64,
    pub safety_bits: u64,
    pub sample: SampleRule,
}

impl Default for DistillParams {
    fn default() -> Self {
        Self {
            cascade_passes: 4,
            k1_coefficient: 0.73,
            safety_bits: 30,
            sample: SampleRule::Auto,
        }
    }
}

/// Everything both parties must agree on before a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub system: SystemParams,
    pub length_km: f64,
    pub n_clocks: u64,
    pub seed: u64,
    pub distill: DistillParams,
}

impl SessionConfig {
    pub fn new(system: SystemParams, length_km: f64, n_clocks: u64, seed: u64) -> Self {
        Self {
            system,
            length_km,
            n_clocks,
            seed,
            distill: DistillParams::default(),
        }
    }

    /// Fingerprint exchanged in PARAMS. `Debug` prints floats exactly.
    pub fn digest(&self) -> u64 {
        fnv1a64(format!("{self:?}").as_bytes())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.system.validate()?;
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(ParamError::new("length_km", format!("{} must be finite and >= 0", self.length_km)));
        }
        if self.n_clocks == 0 {
            return Err(ParamError::new("n_clocks", "must be positive"));
        }
        if !(1..=255).contains(&self.distill.cascade_passes) {
            return Err(ParamError::new("cascade_passes", format!("{} is outside 1..=255", self.distill.cascade_passes)));
        }
        if !(self.distill.k1_coefficient > 0.0 && self.distill.k1_coefficient.is_finite()) {
            return Err(ParamError::new("cascade_k1", format!("{} must be positive", self.distill.k1_coefficient)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub role: Role,
    pub status: SessionStatus,
    pub n_clocks: u64,
    /// Middle-slot detections reported by Bob.
    pub detections: u64,
    pub sifted_bits: u64,
    pub sample_bits: u64,
    pub sample_errors: u64,
    pub qber: Option<f64>,
    pub leaked_ec: u64,
    pub final_bits: u64,
    pub final_key: Vec<Bit>,
    pub key_hash: Option<u64>,
    /// This party's sifted key before sampling and correction.
    pub sifted_key: SiftedKey,
    /// Photons that reached Bob outside the gate (Bob only).
    pub outer_slot_photons: u64,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("frame: {0}")]
    Frame(#[from] FrameError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("session parameters differ between the parties")]
    ParamsMismatch,
    #[error("peer aborted: {0}")]
    Aborted(String),
    #[error("final key hashes differ")]
    KeyMismatch,
    #[error("post-processing: {0}")]
    Postproc(PostprocError),
}

impl From<PostprocError> for SessionError {
    fn from(e: PostprocError) -> Self {
        match e {
            PostprocError::Transport(t) => SessionError::Transport(t),
            PostprocError::Frame(f) => SessionError::Frame(f),
            PostprocError::Protocol(s) => SessionError::Protocol(s),
            PostprocError::Aborted(s) => SessionError::Aborted(s),
            PostprocError::Param(p) => SessionError::Param(p),
            other => SessionError::Postproc(other),
        }
    }
}

impl SessionError {
    /// Whether the peer is still listening and should be told we gave up.
    fn notify_peer(&self) -> bool {
        !matches!(
            self,
            SessionError::Transport(_)
                | SessionError::Aborted(_)
                | SessionError::ParamsMismatch
                | SessionError::KeyMismatch
        )
    }
}

fn send<T: Transport + ?Sized>(t: &mut T, msg: &Message) -> Result<(), SessionError> {
    Ok(t.send(&msg.to_frame())?)
}

/// Receives one message, turning ABORT into the matching error.
fn recv<T: Transport + ?Sized>(t: &mut T) -> Result<Message, SessionError> {
    match Message::from_frame(&t.recv()?)? {
        Message::Abort { reason } if reason == PARAMS_MISMATCH => Err(SessionError::ParamsMismatch),
        Message::Abort { reason } if reason == KEY_MISMATCH => Err(SessionError::KeyMismatch),
        Message::Abort { reason } => Err(SessionError::Aborted(reason)),
        m => Ok(m),
    }
}

fn unexpected(wanted: &str, got: &Message) -> SessionError {
    SessionError::Protocol(format!("expected {wanted}, got {:?}", got.kind()))
}

fn violation(msg: impl Into<String>) -> SessionError {
    SessionError::Protocol(msg.into())
}

fn random_bits<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<Bit> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = rng.next_u64();
        let take = (n - out.len()).min(64);
        out.extend((0..take).map(|i| ((w >> i) & 1) as Bit));
    }
    out
}

/// Runs one role to completion over `transport`.
pub fn run_session<T: Transport + ?Sized>(
    cfg: &SessionConfig,
    role: Role,
    transport: &mut T,
) -> Result<SessionResult, SessionError> {
    cfg.validate()?;
    let result = match role {
        Role::Alice => alice(cfg, transport),
        Role::Bob => bob(cfg, transport),
    };
    if let Err(e) = &result {
        if e.notify_peer() {
            let _ = send(transport, &Message::Abort { reason: e.to_string() });
        }
    }
    result
}

/// Runs Alice on the calling thread and Bob on a worker, over an in-memory link.
pub fn run_inproc(cfg: &SessionConfig) -> Result<(SessionResult, SessionResult), SessionError> {
    let (mut a, mut b) = memory_pair();
    let cfg_b = cfg.clone();
    let bob = std::thread::spawn(move || run_session(&cfg_b, Role::Bob, &mut b));
    let alice = run_session(cfg, Role::Alice, &mut a);
    drop(a);
    let bob = bob
        .join()
        .map_err(|_| violation("bob thread panicked"))?;
    Ok((alice?, bob?))
}

fn empty_result(role: Role, n_clocks: u64) -> SessionResult {
    SessionResult {
        role,
        status: SessionStatus::InsufficientData,
        n_clocks,
        detections: 0,
        sifted_bits: 0,
        sample_bits: 0,
        sample_errors: 0,
        qber: None,
        leaked_ec: 0,
        final_bits: 0,
        final_key: Vec::new(),
        key_hash: None,
        sifted_key: SiftedKey::default(),
        outer_slot_photons: 0,
    }
}

fn alice<T: Transport + ?Sized>(cfg: &SessionConfig, t: &mut T) -> Result<SessionResult, SessionError> {
    send(t, &Message::Hello { version: PROTOCOL_VERSION })?;
    match recv(t)? {
        Message::Hello { version } if version == PROTOCOL_VERSION => {}
        Message::Hello { version } => return Err(violation(format!("unsupported version {version}"))),
        other => return Err(unexpected("HELLO", &other)),
    }
    let digest = cfg.digest();
    send(t, &Message::Params { digest })?;
    match recv(t)? {
        Message::Params { digest: d } if d == digest => {}
        Message::Params { .. } => return Err(SessionError::ParamsMismatch),
        other => return Err(unexpected("PARAMS", &other)),
    }

    let sys = &cfg.system;
    let mut rng = stream_rng(cfg.seed, Stream::Alice);
    let n = cfg.n_clocks;
    let launch = sys.mu * db_to_fraction(sys.alice_loss_db);
    let mut phases: Vec<u8> = Vec::with_capacity(n as usize);
    let mut start = 0;
    while start < n {
        let len = (n - start).min(PULSE_BATCH);
        let mut batch = Vec::with_capacity(len as usize);
        for clock in start..start + len {
            let (_, pulse) = alice_emit(&mut rng, sys.mu, clock)?;
            batch.push(pulse.phase.quarters());
        }
        phases.extend_from_slice(&batch);
        send(
            t,
            &Message::QuantumPulses {
                first_clock: start,
                mean_photons: launch,
                phases: batch,
            },
        )?;
        start += len;
    }

    let (clocks, bob_bits) = match recv(t)? {
        Message::Detections { clocks, revealed } => (clocks, revealed),
        other => return Err(unexpected("DETECTIONS", &other)),
    };
    if clocks.len() != bob_bits.len() {
        return Err(violation("DETECTIONS clock and bit counts differ"));
    }
    if clocks.windows(2).any(|w| w[1] <= w[0]) || clocks.last().is_some_and(|&c| c >= n) {
        return Err(violation("DETECTIONS clocks must be increasing and below n_clocks"));
    }

    let mut revealed = Vec::with_capacity(clocks.len());
    let mut key = SiftedKey::default();
    for (&clock, &theirs) in clocks.iter().zip(&bob_bits) {
        let q = phases[clock as usize];
        let (b1, b2) = (q >> 1, q & 1);
        match sys.protocol {
            Protocol::Bb84 => {
                revealed.push(b2);
                if bb84_keep(b2, theirs) {
                    key.push(clock, b1);
                }
            }
            Protocol::Sarg04 => {
                revealed.push(b1);
                if sarg04_keep(b1, theirs) {
                    key.push(clock, b2);
                }
            }
        }
    }
    send(t, &Message::BasisReveal { revealed })?;
    match recv(t)? {
        Message::SiftResult { kept } if kept == key.len() as u64 => {}
        Message::SiftResult { kept } => {
            return Err(violation(format!("bob kept {kept} bits, alice kept {}", key.len())))
        }
        other => return Err(unexpected("SIFT_RESULT", &other)),
    }

    let mut result = empty_result(Role::Alice, n);
    result.detections = clocks.len() as u64;
    distill_alice(cfg, t, &mut rng, key, result)
}

fn bob<T: Transport + ?Sized>(cfg: &SessionConfig, t: &mut T) -> Result<SessionResult, SessionError> {
    match recv(t)? {
        Message::Hello { version } if version == PROTOCOL_VERSION => {}
        Message::Hello { version } => return Err(violation(format!("unsupported version {version}"))),
        other => return Err(unexpected("HELLO", &other)),
    }
    send(t, &Message::Hello { version: PROTOCOL_VERSION })?;
    let digest = cfg.digest();
    match recv(t)? {
        Message::Params { digest: d } if d == digest => send(t, &Message::Params { digest })?,
        Message::Params { .. } => {
            send(t, &Message::Abort { reason: PARAMS_MISMATCH.into() })?;
            return Err(SessionError::ParamsMismatch);
        }
        other => return Err(unexpected("PARAMS", &other)),
    }

    let sys = &cfg.system;
    let mut rng = stream_rng(cfg.seed, Stream::Bob);
    let channel = ChannelParams::new(cfg.length_km, sys.alpha_db_per_km)?;
    let mut station = BobStation::new(sys.optics, sys.detector);
    let n = cfg.n_clocks;
    let mut records = Vec::new();
    let mut next = 0u64;
    while next < n {
        let (first_clock, mean_photons, phases) = match recv(t)? {
            Message::QuantumPulses {
                first_clock,
                mean_photons,
                phases,
            } => (first_clock, mean_photons, phases),
            other => return Err(unexpected("QUANTUM_PULSES", &other)),
        };
        if first_clock != next || phases.is_empty() || phases.len() as u64 > n - next {
            return Err(violation(format!(
                "pulse batch of {} at clock {first_clock}, expected clock {next}",
                phases.len()
            )));
        }
        for (i, &q) in phases.iter().enumerate() {
            if q > 3 {
                return Err(violation(format!("phase code {q} out of range")));
            }
            let pulse = propagate(
                EncodedPulse {
                    clock_index: first_clock + i as u64,
                    phase: Phase::from_quarters(q),
                    mean_photons,
                },
                &channel,
            );
            if let Some(rec) = station.receive(&pulse, &mut rng)? {
                if rec.slot == Slot::Middle {
                    records.push(rec);
                }
            }
        }
        next += phases.len() as u64;
    }

    let revealed = records
        .iter()
        .map(|r| match sys.protocol {
            Protocol::Bb84 => r.b3,
            Protocol::Sarg04 => r.port,
        })
        .collect();
    send(
        t,
        &Message::Detections {
            clocks: records.iter().map(|r| r.clock_index).collect(),
            revealed,
        },
    )?;
    let alice_bits = match recv(t)? {
        Message::BasisReveal { revealed } if revealed.len() == records.len() => revealed,
        Message::BasisReveal { revealed } => {
            return Err(violation(format!(
                "BASIS_REVEAL has {} bits for {} detections",
                revealed.len(),
                records.len()
            )))
        }
        other => return Err(unexpected("BASIS_REVEAL", &other)),
    };
    let mut key = SiftedKey::default();
    for (r, &theirs) in records.iter().zip(&alice_bits) {
        let bit = match sys.protocol {
            Protocol::Bb84 => bb84_keep(theirs, r.b3).then_some(r.port),
            Protocol::Sarg04 => sarg04_decide(theirs, r.b3, r.port),
        };
        if let Some(bit) = bit {
            key.push(r.clock_index, bit);
        }
    }
    send(t, &Message::SiftResult { kept: key.len() as u64 })?;

    let mut result = empty_result(Role::Bob, n);
    result.detections = records.len() as u64;
    result.outer_slot_photons = station.outer_slot_photons;
    distill_bob(cfg, t, key, result)
}

/// Sample size, or `None` when the key cannot support an estimate plus a remainder.
fn sample_size(rule: SampleRule, n_sift: usize) -> Option<usize> {
    let k = rule.sample_size(n_sift);
    (k > 0 && k < n_sift).then_some(k)
}

/// Error rate used to size Cascade blocks: a two-sigma upper bound on the
/// sample estimate, floored at `1/k` so a clean sample still gives finite
/// blocks. Underestimating the rate leaves residual errors in short keys.
fn cascade_qber(q_est: f64, k: usize) -> f64 {
    let k = k as f64;
    let q = q_est.max(1.0 / k);
    (q + 2.0 * (q * (1.0 - q) / k).sqrt()).min(0.25)
}

fn distill_alice<T: Transport + ?Sized>(
    cfg: &SessionConfig,
    t: &mut T,
    rng: &mut SimRng,
    key: SiftedKey,
    mut res: SessionResult,
) -> Result<SessionResult, SessionError> {
    let n_sift = key.len();
    res.sifted_bits = n_sift as u64;
    res.sifted_key = key;
    let Some(k) = sample_size(cfg.distill.sample, n_sift) else {
        return Ok(res);
    };
    let positions = choose_sample(n_sift, k, rng);
    send(
        t,
        &Message::QberSample {
            positions: positions.iter().map(|&p| p as u32).collect(),
            bits: positions.iter().map(|&p| res.sifted_key.bits[p]).collect(),
        },
    )?;
    let errors = match recv(t)? {
        Message::QberResult { mismatches } if mismatches as usize <= k => mismatches as usize,
        Message::QberResult { mismatches } => {
            return Err(violation(format!("{mismatches} mismatches in a sample of {k}")))
        }
        other => return Err(unexpected("QBER_RESULT", &other)),
    };
    let q = errors as f64 / k as f64;
    res.sample_bits = k as u64;
    res.sample_errors = errors as u64;
    res.qber = Some(q);
    res.status = SessionStatus::ZeroKey;
    if secret_fraction(q) == 0.0 {
        return Ok(res);
    }
    let remaining = remove_positions(&res.sifted_key, &positions);

    let cascade = CascadeParams {
        passes: cfg.distill.cascade_passes,
        k1_coefficient: cfg.distill.k1_coefficient,
        ..CascadeParams::default()
    }
    .with_random_seeds(rng);
    let leaked = cascade_serve(&remaining.bits, cascade_qber(q, k), &cascade, t)?;
    res.leaked_ec = leaked;

    let n_rem = remaining.len();
    let m = final_key_length(n_rem as u64, q, leaked, cfg.distill.safety_bits) as usize;
    if m == 0 {
        return Ok(res);
    }
    let pa = PaParams {
        seed: random_bits(rng, PaParams::seed_len(n_rem, m)),
        out_len: m,
    };
    send(
        t,
        &Message::PaSeed {
            out_len: m as u32,
            seed: pa.seed.clone(),
        },
    )?;
    let final_key = privacy_amplify(&remaining.bits, &pa)?;
    let hash = key_hash(&final_key);
    match recv(t)? {
        Message::KeyHash { hash: theirs } if theirs == hash => {}
        Message::KeyHash { .. } => {
            send(t, &Message::Abort { reason: KEY_MISMATCH.into() })?;
            return Err(SessionError::KeyMismatch);
        }
        other => return Err(unexpected("KEY_HASH", &other)),
    }
    send(t, &Message::KeyHash { hash })?;
    res.status = SessionStatus::Success;
    res.final_bits = m as u64;
    res.final_key = final_key;
    res.key_hash = Some(hash);
    Ok(res)
}

fn distill_bob<T: Transport + ?Sized>(
    cfg: &SessionConfig,
    t: &mut T,
    key: SiftedKey,
    mut res: SessionResult,
) -> Result<SessionResult, SessionError> {
    let n_sift = key.len();
    res.sifted_bits = n_sift as u64;
    res.sifted_key = key;
    let Some(k) = sample_size(cfg.distill.sample, n_sift) else {
        return Ok(res);
    };
    let (positions, bits) = match recv(t)? {
        Message::QberSample { positions, bits } => (positions, bits),
        other => return Err(unexpected("QBER_SAMPLE", &other)),
    };
    if positions.len() != k || bits.len() != k {
        return Err(violation(format!("QBER sample of {} bits, expected {k}", positions.len())));
    }
    if positions.windows(2).any(|w| w[1] <= w[0]) || positions.last().is_some_and(|&p| p as usize >= n_sift) {
        return Err(violation("QBER sample positions must be increasing and inside the key"));
    }
    let positions: Vec<usize> = positions.into_iter().map(|p| p as usize).collect();
    let errors = positions
        .iter()
        .zip(&bits)
        .filter(|(&p, &b)| res.sifted_key.bits[p] != b)
        .count();
    send(t, &Message::QberResult { mismatches: errors as u32 })?;
    let q = errors as f64 / k as f64;
    res.sample_bits = k as u64;
    res.sample_errors = errors as u64;
    res.qber = Some(q);
    res.status = SessionStatus::ZeroKey;
    if secret_fraction(q) == 0.0 {
        return Ok(res);
    }
    let remaining = remove_positions(&res.sifted_key, &positions);

    let outcome = cascade_correct_remote(&remaining.bits, cfg.distill.cascade_passes, t)?;
    res.leaked_ec = outcome.leaked_bits;

    let n_rem = remaining.len();
    let m = final_key_length(n_rem as u64, q, outcome.leaked_bits, cfg.distill.safety_bits) as usize;
    if m == 0 {
        return Ok(res);
    }
    let seed = match recv(t)? {
        Message::PaSeed { out_len, seed } if out_len as usize == m && seed.len() == PaParams::seed_len(n_rem, m) => seed,
        Message::PaSeed { out_len, seed } => {
            return Err(violation(format!(
                "PA_SEED for {out_len} bits with a {}-bit seed, expected {m} bits",
                seed.len()
            )))
        }
        other => return Err(unexpected("PA_SEED", &other)),
    };
    let final_key = privacy_amplify(&outcome.corrected, &PaParams { seed, out_len: m })?;
    let hash = key_hash(&final_key);
    send(t, &Message::KeyHash { hash })?;
    match recv(t)? {
        Message::KeyHash { hash: theirs } if theirs == hash => {}
        Message::KeyHash { .. } => return Err(SessionError::KeyMismatch),
        other => return Err(unexpected("KEY_HASH", &other)),
    }
    res.status = SessionStatus::Success;
    res.final_bits = m as u64;
    res.final_key = final_key;
    res.key_hash = Some(hash);
    Ok(res)
}
