//! Closed-form link model: sifted rate, QBER, final rate and distance limit.
//!
//! Models work in per-clock probabilities and convert to bits/s with
//! `clock_hz` at the boundary, so the dark term and the signal term of the
//! QBER formula always share units.

pub mod calibrate;
pub mod mc;

use thiserror::Error;

use crate::channel::{db_to_fraction, transmittance, DEFAULT_ALPHA_DB_PER_KM};
use crate::detector::DetectorParams;
use crate::optics::OpticsParams;
use crate::postproc::entropy::secret_fraction_with;
use crate::session::{Protocol, SessionError};
use crate::ParamError;

pub use calibrate::{
    build_dark_curve, calibrate_dark, calibrate_dark_from_limit, reference_dark_model, ReferenceAnchors,
};
pub use mc::{mc_vs_model, simulate_link, LinkStats, McReport, McStatus};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("QBER undefined at {length_km} km: total sifted rate is zero")]
    UndefinedQber { length_km: f64 },
    #[error("anchor QBER {qber_ref} is not in ({q_opt}, 0.5)")]
    InfeasibleAnchor { qber_ref: f64, q_opt: f64 },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("session: {0}")]
    Session(#[from] SessionError),
}

/// How after-pulsing enters the optical QBER term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QberMode {
    /// `qber_opt` already includes every non-dark error source.
    #[default]
    Lumped,
    /// `qber_opt` is optics only; a quarter of `ap_prob` is added on top.
    Decomposed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub clock_hz: f64,
    pub mu: f64,
    pub alice_loss_db: f64,
    pub detector: DetectorParams,
    pub optics: OpticsParams,
    pub alpha_db_per_km: f64,
    pub protocol: Protocol,
    pub ec_efficiency: f64,
    pub qber_mode: QberMode,
}

impl SystemParams {
    /// Defaults with no dark counts and no after-pulsing.
    pub fn noiseless_detector() -> Self {
        Self {
            clock_hz: 1e6,
            mu: 0.1,
            alice_loss_db: 3.0,
            detector: DetectorParams::new(0.1, 0.0, 0.0).expect("static defaults"),
            optics: OpticsParams::default(),
            alpha_db_per_km: DEFAULT_ALPHA_DB_PER_KM,
            protocol: Protocol::Bb84,
            ec_efficiency: 1.2,
            qber_mode: QberMode::Lumped,
        }
    }

    pub fn qe(&self) -> f64 {
        self.detector.qe
    }

    pub fn with_qe(mut self, qe: f64) -> Self {
        self.detector = self.detector.with_qe(qe);
        self
    }

    pub fn with_dark(mut self, d: f64) -> Self {
        self.detector.dark_per_gate = d;
        self.detector.dark_model = None;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ParamError::new(name, format!("{v} must be positive and finite")))
            }
        };
        let nonneg = |name, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ParamError::new(name, format!("{v} must be finite and >= 0")))
            }
        };
        positive("clock_hz", self.clock_hz)?;
        nonneg("mu", self.mu)?;
        nonneg("alice_loss_db", self.alice_loss_db)?;
        nonneg("alpha", self.alpha_db_per_km)?;
        positive("ec_efficiency", self.ec_efficiency)?;
        self.detector.validate()?;
        OpticsParams::new(self.optics.visibility())?;
        Ok(())
    }
}

impl Default for SystemParams {
    /// Operating point with dark counts taken from the calibrated
    /// exponential model at the default `qe`.
    fn default() -> Self {
        let base = Self::noiseless_detector();
        let model = reference_dark_model(&base).expect("default anchors are feasible");
        Self {
            detector: base.detector.with_dark_model(model),
            ..base
        }
    }
}

/// Sifted-key rate split into its photon and dark-count parts, in bits/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftedRate {
    pub signal: f64,
    pub dark: f64,
}

impl SiftedRate {
    pub fn total(&self) -> f64 {
        self.signal + self.dark
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub length_km: f64,
    pub r_sift: f64,
    pub r_error: f64,
    pub qber: f64,
    pub r_final: f64,
}

/// Optical error probability per sifted photon, before the protocol transform.
fn optical_qber(p: &SystemParams) -> f64 {
    match p.qber_mode {
        QberMode::Lumped => p.optics.qber_opt(),
        QberMode::Decomposed => p.optics.qber_opt() + p.detector.ap_prob / 4.0,
    }
}

/// Sifting yield per middle-slot photon and error fraction among kept photons.
///
/// BB84 keeps half the photons with error `q`. SARG04 keeps a photon from
/// mismatched bases with probability 1/2 (always correct) and one from matched
/// bases with probability `q` (always wrong).
fn protocol_factors(p: &SystemParams) -> (f64, f64) {
    let q = optical_qber(p);
    match p.protocol {
        Protocol::Bb84 => (0.5, q),
        Protocol::Sarg04 => ((1.0 + 2.0 * q) / 4.0, 2.0 * q / (1.0 + 2.0 * q)),
    }
}

/// Error fraction of photon-originated sifted bits, as used by the model.
pub fn effective_qber_opt(p: &SystemParams) -> f64 {
    protocol_factors(p).1
}

/// Sifted signal probability per clock.
pub fn signal_per_clock(p: &SystemParams, length_km: f64) -> Result<f64, ParamError> {
    let t = transmittance(length_km, p.alpha_db_per_km)?;
    let middle_slot = 0.5;
    Ok(p.mu * db_to_fraction(p.alice_loss_db) * p.qe() * middle_slot * protocol_factors(p).0 * t)
}

pub fn sifted_rate_model(p: &SystemParams, length_km: f64) -> Result<SiftedRate, ParamError> {
    Ok(SiftedRate {
        signal: p.clock_hz * signal_per_clock(p, length_km)?,
        dark: p.clock_hz * p.detector.dark_per_gate,
    })
}

/// Exact bracketed form with `R = signal + d` in per-clock units.
fn qber_from_parts(q_opt: f64, signal: f64, d: f64) -> Option<f64> {
    let r = signal + d;
    (r > 0.0).then(|| (q_opt * (r - d) + d / 2.0) / r)
}

pub fn qber_model(p: &SystemParams, length_km: f64) -> Result<f64, AnalysisError> {
    let s = signal_per_clock(p, length_km)?;
    qber_from_parts(effective_qber_opt(p), s, p.detector.dark_per_gate)
        .ok_or(AnalysisError::UndefinedQber { length_km })
}

pub fn final_rate_with_ec(p: &SystemParams, length_km: f64, f_ec: f64) -> Result<f64, AnalysisError> {
    let r = sifted_rate_model(p, length_km)?.total();
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(r * secret_fraction_with(qber_model(p, length_km)?, f_ec))
}

pub fn final_rate_model(p: &SystemParams, length_km: f64) -> Result<f64, AnalysisError> {
    final_rate_with_ec(p, length_km, p.ec_efficiency)
}

pub fn rate_point(p: &SystemParams, length_km: f64) -> Result<RatePoint, AnalysisError> {
    let r_sift = sifted_rate_model(p, length_km)?.total();
    let qber = qber_model(p, length_km)?;
    Ok(RatePoint {
        length_km,
        r_sift,
        r_error: qber * r_sift,
        qber,
        r_final: final_rate_model(p, length_km)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceLimit {
    Finite(f64),
    /// No dark floor: the QBER never reaches the security limit.
    Unbounded,
}

impl DistanceLimit {
    pub fn km(self) -> Option<f64> {
        match self {
            DistanceLimit::Finite(km) => Some(km),
            DistanceLimit::Unbounded => None,
        }
    }
}

/// Beyond this the transmittance underflows long before any realistic limit.
const MAX_SEARCH_KM: f64 = 1e5;

/// Smallest length at which the ideal-EC (`f_EC = 1`) final rate vanishes.
pub fn distance_limit(p: &SystemParams) -> Result<DistanceLimit, AnalysisError> {
    let positive = |l: f64| -> Result<bool, AnalysisError> { Ok(final_rate_with_ec(p, l, 1.0)? > 0.0) };
    if !positive(0.0)? {
        return Err(AnalysisError::Degenerate(
            "final key rate is zero already at 0 km".into(),
        ));
    }
    if p.detector.dark_per_gate == 0.0 {
        return Ok(DistanceLimit::Unbounded);
    }
    let (mut lo, mut hi) = (0.0, 50.0);
    while positive(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_SEARCH_KM {
            return Ok(DistanceLimit::Unbounded);
        }
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if positive(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DistanceLimit::Finite(hi))
}
