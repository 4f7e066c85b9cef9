//! BB84 and SARG04 sifting.
//!
//! BB84 reveals Alice's `b2` and Bob's `b3` and keeps matching bases; the key
//! bit is Alice's `b1` and Bob's port. SARG04 swaps the roles: Alice's `b1` and
//! Bob's port are revealed, and the key bit is Alice's `b2`. Given `b1`, Bob
//! knows the state was one of two candidates with phases `b1·π` and
//! `b1·π + π/2`. He keeps the clock only when his outcome would have been
//! impossible, at unit visibility, under exactly one of them.

use thiserror::Error;

use crate::optics::{bob_phase_quarters, Phase, Slot};
use crate::session::{AliceRecord, BobRecord, SiftedKey};
use crate::Bit;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SiftError {
    #[error("bob reports clock {0}, which alice never emitted")]
    MissingClock(u64),
    #[error("records are not strictly increasing in clock index at {0}")]
    Unordered(u64),
}

pub fn bb84_keep(b2: Bit, b3: Bit) -> bool {
    b2 == b3
}

/// Phase of the outcome Bob observed: a click on `port` after applying `b3`
/// is certain for an input of phase `b3·π/2 + port·π`.
fn outcome_phase(b3: Bit, port: Bit) -> Phase {
    Phase::from_quarters(bob_phase_quarters(b3).quarters() + 2 * (port & 1))
}

/// An outcome is impossible under a candidate when the two phases are π apart.
fn impossible(candidate: Phase, outcome: Phase) -> bool {
    candidate.cos_diff(outcome) == -1.0
}

/// Bob's SARG04 key bit for a revealed `b1` and his own `b3` and `port`,
/// or `None` when the clock is discarded.
pub fn sarg04_decide(b1: Bit, b3: Bit, port: Bit) -> Option<Bit> {
    let candidates = [
        Phase::from_quarters(2 * (b1 & 1)),
        Phase::from_quarters(2 * (b1 & 1) + 1),
    ];
    let omega = outcome_phase(b3, port);
    match (impossible(candidates[0], omega), impossible(candidates[1], omega)) {
        (true, false) => Some(1),
        (false, true) => Some(0),
        _ => None,
    }
}

/// Keep decision from the public bits alone. It does not depend on `b3`.
pub fn sarg04_keep(b1: Bit, port: Bit) -> bool {
    sarg04_decide(b1, 0, port).is_some()
}

fn sift_with(
    alice: &[AliceRecord],
    bob: &[BobRecord],
    rule: impl Fn(&AliceRecord, &BobRecord) -> Option<(Bit, Bit)>,
) -> Result<(SiftedKey, SiftedKey), SiftError> {
    if let Some(w) = alice.windows(2).find(|w| w[1].clock_index <= w[0].clock_index) {
        return Err(SiftError::Unordered(w[1].clock_index));
    }
    if let Some(w) = bob.windows(2).find(|w| w[1].clock_index <= w[0].clock_index) {
        return Err(SiftError::Unordered(w[1].clock_index));
    }
    let mut key_a = SiftedKey::default();
    let mut key_b = SiftedKey::default();
    let mut ai = 0;
    for rec in bob.iter().filter(|r| r.slot == Slot::Middle) {
        while ai < alice.len() && alice[ai].clock_index < rec.clock_index {
            ai += 1;
        }
        let a = alice
            .get(ai)
            .filter(|a| a.clock_index == rec.clock_index)
            .ok_or(SiftError::MissingClock(rec.clock_index))?;
        if let Some((bit_a, bit_b)) = rule(a, rec) {
            key_a.push(rec.clock_index, bit_a);
            key_b.push(rec.clock_index, bit_b);
        }
    }
    Ok((key_a, key_b))
}

pub fn sift_bb84(
    alice: &[AliceRecord],
    bob: &[BobRecord],
) -> Result<(SiftedKey, SiftedKey), SiftError> {
    sift_with(alice, bob, |a, b| bb84_keep(a.b2, b.b3).then_some((a.b1, b.port)))
}

pub fn sift_sarg04(
    alice: &[AliceRecord],
    bob: &[BobRecord],
) -> Result<(SiftedKey, SiftedKey), SiftError> {
    sift_with(alice, bob, |a, b| {
        sarg04_decide(a.b1, b.b3, b.port).map(|bit| (a.b2, bit))
    })
}
