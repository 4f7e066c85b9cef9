//! Source and double-AMZI interferometer model.
//!
//! Alice's encoding interferometer turns each laser pulse into a double pulse
//! whose relative phase carries her two random bits: `b1` selects 0 or π on
//! the first modulator, `b2` selects 0 or π/2 on the second. Bob adds 0 or π/2
//! with his own modulator before the decoding interferometer. Each photon then
//! exits in one of three timeslots on one of two ports; only the middle slot
//! interferes.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::{Bit, ParamError};

/// Interference quality of the interferometer pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticsParams {
    visibility: f64,
}

impl OpticsParams {
    pub fn new(visibility: f64) -> Result<Self, ParamError> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(ParamError::new(
                "visibility",
                format!("{visibility} is outside [0, 1]"),
            ));
        }
        Ok(Self { visibility })
    }

    /// Builds the optics from the optical error rate `(1 - V) / 2`.
    pub fn from_qber_opt(qber_opt: f64) -> Result<Self, ParamError> {
        if !(0.0..=0.5).contains(&qber_opt) {
            return Err(ParamError::new(
                "qber_opt",
                format!("{qber_opt} is outside [0, 0.5]"),
            ));
        }
        Self::new(1.0 - 2.0 * qber_opt)
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    /// `e = (1 - V) / (1 + V)`.
    pub fn extinction_ratio(&self) -> f64 {
        (1.0 - self.visibility) / (1.0 + self.visibility)
    }

    /// `(1 - V) / 2`, equal to `e / (1 + e)`.
    pub fn qber_opt(&self) -> f64 {
        (1.0 - self.visibility) / 2.0
    }
}

impl Default for OpticsParams {
    /// V = 0.98, i.e. a 1% optical error rate.
    fn default() -> Self {
        Self { visibility: 0.98 }
    }
}

/// A relative phase restricted to multiples of π/2, stored as quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ZERO: Phase = Phase(0);

    pub fn from_quarters(q: u8) -> Self {
        Phase(q % 4)
    }

    pub fn quarters(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        f64::from(self.0) * FRAC_PI_2
    }

    /// `cos(self - other)`, exact on the quarter-turn lattice.
    pub fn cos_diff(self, other: Phase) -> f64 {
        match (4 + self.0 - other.0) % 4 {
            0 => 1.0,
            2 => -1.0,
            _ => 0.0,
        }
    }
}

/// A double pulse leaving Alice's encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedPulse {
    pub clock_index: u64,
    pub phase: Phase,
    pub mean_photons: f64,
}

impl EncodedPulse {
    pub fn phase_a(&self) -> f64 {
        self.phase.radians()
    }
}

/// Applies PMA_1 (`b1`: 0 or π) and PMA_2 (`b2`: 0 or π/2).
pub fn encode_pulse(b1: Bit, b2: Bit, mu: f64, clock: u64) -> Result<EncodedPulse, ParamError> {
    if mu.is_nan() || mu < 0.0 {
        return Err(ParamError::new("mu", format!("{mu} must be >= 0")));
    }
    Ok(EncodedPulse {
        clock_index: clock,
        phase: Phase::from_quarters(2 * (b1 & 1) + (b2 & 1)),
        mean_photons: mu,
    })
}

/// Bob's modulator phase: 0 or π/2.
pub fn bob_phase(b3: Bit) -> f64 {
    f64::from(b3 & 1) * FRAC_PI_2
}

pub fn bob_phase_quarters(b3: Bit) -> Phase {
    Phase::from_quarters(b3 & 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Early = 0,
    Middle = 1,
    Late = 2,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Early, Slot::Middle, Slot::Late];
}

/// Probability of a photon exiting in each (timeslot, port) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeslotDistribution {
    pub p: [[f64; 2]; 3],
}

impl TimeslotDistribution {
    fn from_cos(cos_dphi: f64, visibility: f64) -> Self {
        let outer = [0.125, 0.125];
        let middle = [
            0.5 * (1.0 + visibility * cos_dphi) / 2.0,
            0.5 * (1.0 - visibility * cos_dphi) / 2.0,
        ];
        Self {
            p: [outer, middle, outer],
        }
    }

    /// Exact version for quarter-turn phases.
    pub fn for_phases(alice: Phase, bob: Phase, optics: &OpticsParams) -> Self {
        Self::from_cos(alice.cos_diff(bob), optics.visibility)
    }

    pub fn get(&self, slot: Slot, port: Bit) -> f64 {
        self.p[slot as usize][usize::from(port & 1)]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }

    /// Maps a uniform draw in `[0, 1)` to a cell by inversion.
    pub fn sample_cell(&self, u: f64) -> (Slot, Bit) {
        let mut acc = 0.0;
        for slot in Slot::ALL {
            for port in 0..2u8 {
                acc += self.get(slot, port);
                if u < acc {
                    return (slot, port);
                }
            }
        }
        // u within rounding of 1.0
        (Slot::Late, 1)
    }
}

/// Detection law for relative phase `phase_a - phase_b` (radians).
pub fn detection_distribution(
    phase_a: f64,
    phase_b: f64,
    optics: &OpticsParams,
) -> TimeslotDistribution {
    let dphi = (phase_a - phase_b).rem_euclid(TAU);
    let cos = if dphi == 0.0 {
        1.0
    } else if dphi == PI {
        -1.0
    } else {
        dphi.cos()
    };
    TimeslotDistribution::from_cos(cos, optics.visibility)
}

/// Photon number of a weak coherent pulse: `k ~ Poisson(mu)`.
pub fn sample_photon_count<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Result<u32, ParamError> {
    if mu.is_nan() || mu < 0.0 {
        return Err(ParamError::new("mu", format!("{mu} must be >= 0")));
    }
    if mu == 0.0 {
        return Ok(0);
    }
    let poisson =
        Poisson::new(mu).map_err(|e| ParamError::new("mu", format!("{mu}: {e}")))?;
    Ok(poisson.sample(rng) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn visibility_derived_quantities() {
        let o = OpticsParams::new(0.98).unwrap();
        assert_eq!(o.qber_opt(), (1.0 - 0.98) / 2.0);
        let e = o.extinction_ratio();
        assert!((e / (1.0 + e) - 0.01).abs() < EPS);
        assert!(OpticsParams::new(1.2).is_err());
        assert!(OpticsParams::new(-0.1).is_err());
        assert!((OpticsParams::from_qber_opt(0.01).unwrap().visibility() - 0.98).abs() < EPS);
    }

    #[test]
    fn encode_phases() {
        assert_eq!(encode_pulse(0, 0, 0.1, 0).unwrap().phase_a(), 0.0);
        assert_eq!(encode_pulse(1, 0, 0.1, 0).unwrap().phase_a(), PI);
        assert_eq!(encode_pulse(1, 1, 0.1, 0).unwrap().phase_a(), 3.0 * FRAC_PI_2);
        assert_eq!(encode_pulse(0, 1, 0.1, 0).unwrap().phase_a(), FRAC_PI_2);
        assert!(encode_pulse(0, 0, -0.1, 0).is_err());
    }

    #[test]
    fn bob_phase_values() {
        assert_eq!(bob_phase(0), 0.0);
        assert_eq!(bob_phase(1), FRAC_PI_2);
        let p = encode_pulse(0, 1, 0.1, 0).unwrap();
        assert_eq!(p.phase_a() - bob_phase(1), 0.0);
        assert_eq!(p.phase.cos_diff(bob_phase_quarters(1)), 1.0);
    }

    #[test]
    fn distribution_examples() {
        let perfect = OpticsParams::new(1.0).unwrap();
        let d = detection_distribution(0.0, 0.0, &perfect);
        assert_eq!(d.p[1], [0.5, 0.0]);
        for slot in [Slot::Early, Slot::Late] {
            assert_eq!(d.get(slot, 0), 0.125);
            assert_eq!(d.get(slot, 1), 0.125);
        }
        let d = detection_distribution(PI, 0.0, &perfect);
        assert_eq!(d.p[1], [0.0, 0.5]);

        let d = detection_distribution(0.0, 0.0, &OpticsParams::new(0.98).unwrap());
        assert!((d.p[1][0] - 0.495).abs() < EPS);
        assert!((d.p[1][1] - 0.005).abs() < EPS);
        assert!((d.p[1][1] / 0.5 - 0.01).abs() < EPS);
    }

    #[test]
    fn matched_bases_deterministic_at_unit_visibility() {
        let perfect = OpticsParams::new(1.0).unwrap();
        for q in 0..4u8 {
            for b3 in 0..2u8 {
                let d = TimeslotDistribution::for_phases(
                    Phase::from_quarters(q),
                    bob_phase_quarters(b3),
                    &perfect,
                );
                let matched = (q & 1) == b3;
                let middle = d.p[1];
                if matched {
                    assert!(middle.contains(&0.5) && middle.contains(&0.0));
                } else {
                    assert_eq!(middle, [0.25, 0.25]);
                }
            }
        }
    }

    #[test]
    fn sample_cell_inversion() {
        let d = detection_distribution(0.0, 0.0, &OpticsParams::new(1.0).unwrap());
        assert_eq!(d.sample_cell(0.0), (Slot::Early, 0));
        assert_eq!(d.sample_cell(0.2), (Slot::Early, 1));
        assert_eq!(d.sample_cell(0.3), (Slot::Middle, 0));
        assert_eq!(d.sample_cell(0.8), (Slot::Late, 0));
        assert_eq!(d.sample_cell(0.99), (Slot::Late, 1));
    }

    #[test]
    fn photon_count_zero_mean() {
        let mut rng = seeded(1);
        for _ in 0..1000 {
            assert_eq!(sample_photon_count(0.0, &mut rng).unwrap(), 0);
        }
        assert!(sample_photon_count(-1.0, &mut rng).is_err());
    }

    #[test]
    fn photon_count_statistics() {
        let mut rng = seeded(2024);
        let n = 1_000_000;
        let mu: f64 = 0.1;
        let (mut zeros, mut total) = (0u64, 0u64);
        for _ in 0..n {
            let k = sample_photon_count(mu, &mut rng).unwrap();
            zeros += u64::from(k == 0);
            total += u64::from(k);
        }
        let p0 = (-mu).exp();
        let sigma_p0 = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - p0).abs() < 3.0 * sigma_p0);
        let sigma_mean = (mu / n as f64).sqrt();
        assert!((total as f64 / n as f64 - mu).abs() < 3.0 * sigma_mean);
    }

    proptest! {
        #[test]
        fn distribution_is_normalised(dphi in -10.0f64..10.0, v in 0.0f64..=1.0) {
            let o = OpticsParams::new(v).unwrap();
            let d = detection_distribution(dphi, 0.0, &o);
            prop_assert!((d.total() - 1.0).abs() < EPS);
            for cell in d.p.iter().flatten() {
                prop_assert!((0.0..=0.5).contains(cell));
            }
            let outer: f64 = d.p[0].iter().chain(d.p[2].iter()).sum();
            prop_assert!((outer - 0.5).abs() < EPS);
            prop_assert!((d.p[1][0] + d.p[1][1] - 0.5).abs() < EPS);
        }

        #[test]
        fn port_swap_symmetry(dphi in -10.0f64..10.0, v in 0.0f64..=1.0) {
            let o = OpticsParams::new(v).unwrap();
            let d = detection_distribution(dphi, 0.0, &o);
            let s = detection_distribution(dphi + PI, 0.0, &o);
            prop_assert!((d.p[1][0] - s.p[1][1]).abs() < 1e-15);
            prop_assert!((d.p[1][1] - s.p[1][0]).abs() < 1e-15);
            prop_assert_eq!(d.p[0], s.p[0]);
        }

        #[test]
        fn port_swap_exact_on_lattice(q in 0u8..4, b in 0u8..4, v in 0.0f64..=1.0) {
            let o = OpticsParams::new(v).unwrap();
            let d = TimeslotDistribution::for_phases(Phase::from_quarters(q), Phase::from_quarters(b), &o);
            let s = TimeslotDistribution::for_phases(Phase::from_quarters(q + 2), Phase::from_quarters(b), &o);
            prop_assert_eq!(d.p[1][0], s.p[1][1]);
            prop_assert_eq!(d.p[1][1], s.p[1][0]);
        }

        #[test]
        fn middle_slot_error_equals_qber_opt(v in 0.0f64..=1.0) {
            let o = OpticsParams::new(v).unwrap();
            let d = detection_distribution(0.0, 0.0, &o);
            prop_assert!((d.p[1][1] / 0.5 - o.qber_opt()).abs() < EPS);
        }
    }
}
