//! Dark-count calibration by inverting the QBER model at known operating points.
//!
//! Absolute dark-count values are not available, so they are recovered from
//! two published anchors: the QBER measured at 100 km with qe = 5%, and the
//! distance limit quoted for qe = 10%. Because each calibrated `d` is
//! proportional to the signal at the anchor, quantities derived from it do not
//! depend on the assumed loss inside Alice's station.

use crate::analysis::{effective_qber_opt, signal_per_clock, AnalysisError, SystemParams};
use crate::detector::{fit_dark_model, DarkCountModel};
use crate::optics::OpticsParams;
use crate::postproc::entropy::security_limit_qber;
use crate::session::Protocol;

/// Published operating points used for calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceAnchors {
    pub qe_low: f64,
    pub qber_length_km: f64,
    pub qber_at_length: f64,
    pub qe_high: f64,
    pub limit_km: f64,
}

impl Default for ReferenceAnchors {
    fn default() -> Self {
        Self {
            qe_low: 0.05,
            qber_length_km: 100.0,
            qber_at_length: 0.06,
            qe_high: 0.10,
            limit_km: 98.0,
        }
    }
}

/// Per-gate dark probability that makes the model QBER equal `qber_ref` at `l_ref`.
pub fn calibrate_dark(
    p: &SystemParams,
    qe: f64,
    l_ref: f64,
    qber_ref: f64,
) -> Result<f64, AnalysisError> {
    let p = p.with_qe(qe);
    let q_opt = effective_qber_opt(&p);
    if !(qber_ref > q_opt && qber_ref < 0.5) {
        return Err(AnalysisError::InfeasibleAnchor { qber_ref, q_opt });
    }
    let s = signal_per_clock(&p, l_ref)?;
    let d = s * (qber_ref - q_opt) / (0.5 - qber_ref);
    if d >= 1.0 {
        return Err(AnalysisError::Degenerate(format!(
            "calibrated dark probability {d} is not below 1"
        )));
    }
    Ok(d)
}

/// Dark probability that puts the ideal-EC distance limit at `l_limit`.
pub fn calibrate_dark_from_limit(
    p: &SystemParams,
    qe: f64,
    l_limit: f64,
) -> Result<f64, AnalysisError> {
    calibrate_dark(p, qe, l_limit, security_limit_qber(1.0))
}

pub fn build_dark_curve(d5: f64, d10: f64) -> Result<DarkCountModel, AnalysisError> {
    Ok(fit_dark_model((0.05, d5), (0.10, d10))?)
}

/// Calibrates both anchors under `p` and fits the exponential. The anchors were
/// measured on the reference link, so BB84 and the default optics are forced:
/// dark counts stay a detector property whatever visibility is configured.
pub fn reference_dark_model(p: &SystemParams) -> Result<DarkCountModel, AnalysisError> {
    let a = ReferenceAnchors::default();
    let p = SystemParams {
        protocol: Protocol::Bb84,
        optics: OpticsParams::default(),
        ..*p
    };
    let d_low = calibrate_dark(&p, a.qe_low, a.qber_length_km, a.qber_at_length)?;
    let d_high = calibrate_dark_from_limit(&p, a.qe_high, a.limit_km)?;
    Ok(fit_dark_model((a.qe_low, d_low), (a.qe_high, d_high))?)
}
