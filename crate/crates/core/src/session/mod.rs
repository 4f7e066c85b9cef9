//! Alice and Bob protocol state machines.
//!
//! The quantum exchange is simulated: Alice's emitted pulses travel to Bob as
//! [`FrameType::QuantumPulses`](frame::FrameType::QuantumPulses) frames, the
//! stand-in for the fiber. Everything after that (sifting, QBER estimation,
//! Cascade, privacy amplification, key confirmation) uses only classical
//! frames, so the two roles can run in separate processes.

pub mod frame;
pub mod messages;
pub mod protocol;
pub mod sift;
pub mod station;
pub mod transport;

use crate::optics::Slot;
use crate::Bit;

pub use protocol::{
    run_inproc, run_session, DistillParams, Role, SessionConfig, SessionError, SessionResult,
    SessionStatus,
};
pub use sift::{sift_bb84, sift_sarg04, SiftError};
pub use station::{alice_emit, bob_receive, BobStation};

/// Alice's random choices for one clock: `b1` drives PMA_1 (0/π), `b2` PMA_2 (0/π/2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AliceRecord {
    pub clock_index: u64,
    pub b1: Bit,
    pub b2: Bit,
}

/// A clock in which one of Bob's detectors clicked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BobRecord {
    pub clock_index: u64,
    pub b3: Bit,
    pub port: Bit,
    pub slot: Slot,
}

/// Key bits together with the clock each came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedKey {
    pub bits: Vec<Bit>,
    pub clock_indices: Vec<u64>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, clock: u64, bit: Bit) {
        self.clock_indices.push(clock);
        self.bits.push(bit);
    }

    pub fn mismatches(&self, other: &SiftedKey) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Protocol {
    #[default]
    Bb84,
    Sarg04,
}
