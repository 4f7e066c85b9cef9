//! Simulator and protocol stack for a one-way, time-bin phase-encoded QKD link
//! built from two asymmetric Mach-Zehnder interferometers.
//!
//! The crate is organised bottom-up:
//!
//! - [`optics`]: phase encoding and the three-timeslot detection law.
//! - [`channel`]: fiber attenuation.
//! - [`detector`]: gated APD pair with dark counts and after-pulsing.
//! - [`session`]: Alice/Bob state machines, framing, BB84/SARG04 sifting.
//! - [`postproc`]: QBER estimation, Cascade, secret fraction, Toeplitz hashing.
//! - [`analysis`]: closed-form rate/QBER model, calibration, Monte Carlo checks.
//! - [`cli`]: configuration parsing and the `qkd` front end.

pub mod analysis;
pub mod bits;
pub mod channel;
pub mod cli;
pub mod detector;
pub mod optics;
pub mod postproc;
pub mod rng;
pub mod session;

use thiserror::Error;

/// A physical or protocol parameter outside its admissible range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{name}`: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub reason: String,
}

impl ParamError {
    pub(crate) fn new(name: &'static str, reason: impl Into<String>) -> Self {
        Self {
            name,
            reason: reason.into(),
        }
    }
}

/// A single classical bit stored as `0` or `1`.
pub type Bit = u8;
