//! Gated InGaAs/InP APD pair.
//!
//! Each detector is opened once per clock for the middle timeslot only. A gate
//! avalanches when an absorbed photon, a dark count, or an after-pulse from the
//! previous gate fires. The dark-count probability follows an exponential law
//! in the quantum efficiency.

use rand::Rng;

use crate::optics::Slot;
use crate::{Bit, ParamError};

/// `d(qe) = a * exp(b * qe)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkCountModel {
    pub a: f64,
    pub b: f64,
}

impl DarkCountModel {
    /// Evaluates the model, clamped into `[0, 1)`.
    pub fn eval(&self, qe: f64) -> f64 {
        let d = self.a * (self.b * qe).exp();
        d.clamp(0.0, 1.0 - f64::EPSILON)
    }

    /// Exponential through two `(qe, d)` points.
    pub fn fit(p1: (f64, f64), p2: (f64, f64)) -> Result<Self, ParamError> {
        let ((q1, d1), (q2, d2)) = (p1, p2);
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(ParamError::new(
                "dark_count",
                format!("fit points need positive d, got {d1} and {d2}"),
            ));
        }
        if q1 == q2 || !q1.is_finite() || !q2.is_finite() {
            return Err(ParamError::new(
                "qe",
                format!("fit points need distinct finite qe, got {q1} and {q2}"),
            ));
        }
        let b = (d2 / d1).ln() / (q2 - q1);
        let a = d1 * (-b * q1).exp();
        Ok(Self { a, b })
    }
}

pub fn dark_model_eval(qe: f64, model: &DarkCountModel) -> f64 {
    model.eval(qe)
}

pub fn fit_dark_model(p1: (f64, f64), p2: (f64, f64)) -> Result<DarkCountModel, ParamError> {
    DarkCountModel::fit(p1, p2)
}

/// What to do when both detectors fire in the same gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DoubleClickPolicy {
    /// Assign the click to a uniformly random port.
    #[default]
    RandomPort,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub qe: f64,
    /// Dark-count probability per gate, per detector.
    pub dark_per_gate: f64,
    /// After-pulse probability in the gate following an avalanche.
    pub ap_prob: f64,
    /// Model `dark_per_gate` was evaluated from, when there is one.
    pub dark_model: Option<DarkCountModel>,
    pub double_click_policy: DoubleClickPolicy,
}

impl DetectorParams {
    pub fn new(qe: f64, dark_per_gate: f64, ap_prob: f64) -> Result<Self, ParamError> {
        let p = Self {
            qe,
            dark_per_gate,
            ap_prob,
            dark_model: None,
            double_click_policy: DoubleClickPolicy::RandomPort,
        };
        p.validate()?;
        Ok(p)
    }

    /// Sets the dark-count probability from `model` at the current `qe`.
    pub fn with_dark_model(mut self, model: DarkCountModel) -> Self {
        self.dark_per_gate = model.eval(self.qe);
        self.dark_model = Some(model);
        self
    }

    /// Changes `qe`, re-evaluating the dark model if one is attached.
    pub fn with_qe(mut self, qe: f64) -> Self {
        self.qe = qe;
        if let Some(model) = self.dark_model {
            self.dark_per_gate = model.eval(qe);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.qe > 0.0 && self.qe <= 1.0) {
            return Err(ParamError::new("qe", format!("{} is outside (0, 1]", self.qe)));
        }
        if !(0.0..1.0).contains(&self.dark_per_gate) {
            return Err(ParamError::new(
                "dark",
                format!("{} is outside [0, 1)", self.dark_per_gate),
            ));
        }
        if !(0.0..1.0).contains(&self.ap_prob) {
            return Err(ParamError::new(
                "ap_prob",
                format!("{} is outside [0, 1)", self.ap_prob),
            ));
        }
        Ok(())
    }
}

/// After-pulse memory: one flag per detector, armed by an avalanche and
/// consumed by the next gate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorState {
    pub pending_afterpulse: [bool; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Click {
    pub port: Bit,
    pub slot: Slot,
}

/// Click probability of one detector in one gate.
pub fn click_probability(photons: u32, params: &DetectorParams, pending: bool) -> f64 {
    let miss_photons = (1.0 - params.qe).powi(photons as i32);
    let miss_ap = if pending { 1.0 - params.ap_prob } else { 1.0 };
    1.0 - miss_photons * (1.0 - params.dark_per_gate) * miss_ap
}

/// Runs one middle-slot gate on both detectors.
///
/// `arrivals[j]` is the number of photons reaching detector `j` inside the
/// gate. Exactly two uniforms are drawn per gate, plus one more to arbitrate
/// a double click under [`DoubleClickPolicy::RandomPort`].
pub fn gate_detect<R: Rng + ?Sized>(
    arrivals: [u32; 2],
    params: &DetectorParams,
    state: &mut DetectorState,
    rng: &mut R,
) -> Option<Click> {
    let mut fired = [false; 2];
    for (j, fired) in fired.iter_mut().enumerate() {
        let p = click_probability(arrivals[j], params, state.pending_afterpulse[j]);
        *fired = rng.random::<f64>() < p;
    }
    state.pending_afterpulse = fired;

    let port = match fired {
        [false, false] => return None,
        [true, false] => 0,
        [false, true] => 1,
        [true, true] => match params.double_click_policy {
            DoubleClickPolicy::RandomPort => u8::from(rng.random::<bool>()),
            DoubleClickPolicy::Discard => return None,
        },
    };
    Some(Click {
        port,
        slot: Slot::Middle,
    })
}
