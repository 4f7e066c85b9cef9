//! Per-clock quantum exchange: Alice's encoder and Bob's decoder and detectors.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};

use crate::detector::{gate_detect, DetectorParams, DetectorState};
use crate::optics::{bob_phase_quarters, encode_pulse, EncodedPulse, OpticsParams, Slot, TimeslotDistribution};
use crate::session::{AliceRecord, BobRecord};
use crate::ParamError;

/// Draws `b1` and `b2` from one 32-bit word and encodes the pulse.
pub fn alice_emit<R: RngCore + ?Sized>(
    rng: &mut R,
    mu: f64,
    clock: u64,
) -> Result<(AliceRecord, EncodedPulse), ParamError> {
    let word = rng.next_u32();
    let (b1, b2) = ((word & 1) as u8, ((word >> 1) & 1) as u8);
    let pulse = encode_pulse(b1, b2, mu, clock)?;
    Ok((
        AliceRecord {
            clock_index: clock,
            b1,
            b2,
        },
        pulse,
    ))
}

/// Bob's station: decoding interferometer, gated detector pair and
/// after-pulse memory, plus diagnostics for discarded outer-slot photons.
#[derive(Debug, Clone)]
pub struct BobStation {
    pub optics: OpticsParams,
    pub detector: DetectorParams,
    pub state: DetectorState,
    pub outer_slot_photons: u64,
    source: Option<(f64, Poisson<f64>)>,
}

impl BobStation {
    pub fn new(optics: OpticsParams, detector: DetectorParams) -> Self {
        Self {
            optics,
            detector,
            state: DetectorState::default(),
            outer_slot_photons: 0,
            source: None,
        }
    }

    fn photons<R: Rng + ?Sized>(&mut self, mean: f64, rng: &mut R) -> Result<u32, ParamError> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(ParamError::new("mean_photons", format!("{mean} must be finite and >= 0")));
        }
        if mean == 0.0 {
            return Ok(0);
        }
        let poisson = match self.source {
            Some((m, p)) if m == mean => p,
            _ => {
                let p = Poisson::new(mean)
                    .map_err(|e| ParamError::new("mean_photons", e.to_string()))?;
                self.source = Some((mean, p));
                p
            }
        };
        Ok(poisson.sample(rng) as u32)
    }

    /// Receives one already-propagated pulse. `b3` is drawn every clock.
    pub fn receive<R: Rng + ?Sized>(
        &mut self,
        pulse: &EncodedPulse,
        rng: &mut R,
    ) -> Result<Option<BobRecord>, ParamError> {
        let b3 = (rng.next_u32() & 1) as u8;
        let k = self.photons(pulse.mean_photons, rng)?;
        let mut arrivals = [0u32; 2];
        if k > 0 {
            let dist =
                TimeslotDistribution::for_phases(pulse.phase, bob_phase_quarters(b3), &self.optics);
            for _ in 0..k {
                match dist.sample_cell(rng.random()) {
                    (Slot::Middle, port) => arrivals[usize::from(port)] += 1,
                    _ => self.outer_slot_photons += 1,
                }
            }
        }
        Ok(
            gate_detect(arrivals, &self.detector, &mut self.state, rng).map(|click| BobRecord {
                clock_index: pulse.clock_index,
                b3,
                port: click.port,
                slot: click.slot,
            }),
        )
    }
}

pub fn bob_receive<R: Rng + ?Sized>(
    pulse: &EncodedPulse,
    rng: &mut R,
    optics: &OpticsParams,
    detector: &DetectorParams,
    state: &mut DetectorState,
) -> Result<Option<BobRecord>, ParamError> {
    let mut station = BobStation::new(*optics, *detector);
    station.state = *state;
    let rec = station.receive(pulse, rng)?;
    *state = station.state;
    Ok(rec)
}
