//! Classical key distillation: QBER estimation, Cascade, secret fraction and
//! Toeplitz privacy amplification.

pub mod cascade;
pub mod entropy;
pub mod qber;
pub mod toeplitz;

use thiserror::Error;

use crate::session::frame::FrameError;
use crate::session::transport::TransportError;
use crate::ParamError;

pub use cascade::{cascade_correct, cascade_correct_remote, cascade_serve, CascadeParams};
pub use entropy::{binary_entropy, final_key_length, secret_fraction, security_limit_qber};
pub use qber::{estimate_qber, QberEstimate, SampleRule};
pub use toeplitz::{privacy_amplify, PaParams};

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("insufficient data: need {needed} bits, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("key lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("frame: {0}")]
    Frame(#[from] FrameError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("peer aborted: {0}")]
    Aborted(String),
}

impl PostprocError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        PostprocError::Param(ParamError::new(name, reason))
    }
}
