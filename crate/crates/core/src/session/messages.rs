//! Typed payloads carried by [`Frame`]s. All integers are little-endian; bit
//! strings are a u32 bit count followed by MSB-first packed bytes.

use crate::bits::{pack_bits, unpack_bits};
use crate::session::frame::{Frame, FrameError, FrameType};
use crate::Bit;

/// One parity query: bits `start..end` of pass `pass` in that pass's order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParityQuery {
    pub pass: u8,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { version: u16 },
    Params { digest: u64 },
    /// Simulation data: pulses for clocks `first_clock..first_clock + phases.len()`.
    QuantumPulses {
        first_clock: u64,
        mean_photons: f64,
        phases: Vec<u8>,
    },
    /// Bob's middle-slot detections plus his publicly revealed bit for each.
    Detections { clocks: Vec<u64>, revealed: Vec<Bit> },
    /// Alice's revealed bit for each reported detection.
    BasisReveal { revealed: Vec<Bit> },
    SiftResult { kept: u64 },
    QberSample { positions: Vec<u32>, bits: Vec<Bit> },
    QberResult { mismatches: u32 },
    ShuffleSeed { pass: u8, block_size: u32, seed: u64 },
    Parities { queries: Vec<ParityQuery> },
    ParityReply { parities: Vec<Bit> },
    PaSeed { out_len: u32, seed: Vec<Bit> },
    KeyHash { hash: u64 },
    Abort { reason: String },
}

impl Message {
    pub fn kind(&self) -> FrameType {
        match self {
            Message::Hello { .. } => FrameType::Hello,
            Message::Params { .. } => FrameType::Params,
            Message::QuantumPulses { .. } => FrameType::QuantumPulses,
            Message::Detections { .. } => FrameType::Detections,
            Message::BasisReveal { .. } => FrameType::BasisReveal,
            Message::SiftResult { .. } => FrameType::SiftResult,
            Message::QberSample { .. } => FrameType::QberSample,
            Message::QberResult { .. } => FrameType::QberResult,
            Message::ShuffleSeed { .. } => FrameType::ShuffleSeed,
            Message::Parities { .. } => FrameType::Parities,
            Message::ParityReply { .. } => FrameType::ParityReply,
            Message::PaSeed { .. } => FrameType::PaSeed,
            Message::KeyHash { .. } => FrameType::KeyHash,
            Message::Abort { .. } => FrameType::Abort,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let mut w = Writer::default();
        match self {
            Message::Hello { version } => w.u16(*version),
            Message::Params { digest } => w.u64(*digest),
            Message::QuantumPulses {
                first_clock,
                mean_photons,
                phases,
            } => {
                w.u64(*first_clock);
                w.f64(*mean_photons);
                w.u32(phases.len() as u32);
                w.bytes(phases);
            }
            Message::Detections { clocks, revealed } => {
                w.u32(clocks.len() as u32);
                for c in clocks {
                    w.u64(*c);
                }
                w.bits(revealed);
            }
            Message::BasisReveal { revealed } => w.bits(revealed),
            Message::SiftResult { kept } => w.u64(*kept),
            Message::QberSample { positions, bits } => {
                w.u32(positions.len() as u32);
                for p in positions {
                    w.u32(*p);
                }
                w.bits(bits);
            }
            Message::QberResult { mismatches } => w.u32(*mismatches),
            Message::ShuffleSeed {
                pass,
                block_size,
                seed,
            } => {
                w.u8(*pass);
                w.u32(*block_size);
                w.u64(*seed);
            }
            Message::Parities { queries } => {
                w.u32(queries.len() as u32);
                for q in queries {
                    w.u8(q.pass);
                    w.u32(q.start);
                    w.u32(q.end);
                }
            }
            Message::ParityReply { parities } => w.bits(parities),
            Message::PaSeed { out_len, seed } => {
                w.u32(*out_len);
                w.bits(seed);
            }
            Message::KeyHash { hash } => w.u64(*hash),
            Message::Abort { reason } => w.bytes(reason.as_bytes()),
        }
        Frame::new(self.kind(), w.0)
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, FrameError> {
        let kind = frame.kind;
        let mut r = Reader {
            buf: &frame.payload,
            kind,
        };
        let msg = match kind {
            FrameType::Hello => Message::Hello { version: r.u16()? },
            FrameType::Params => Message::Params { digest: r.u64()? },
            FrameType::QuantumPulses => {
                let first_clock = r.u64()?;
                let mean_photons = r.f64()?;
                let n = r.u32()? as usize;
                let phases = r.take(n)?.to_vec();
                Message::QuantumPulses {
                    first_clock,
                    mean_photons,
                    phases,
                }
            }
            FrameType::Detections => {
                let n = r.u32()? as usize;
                r.ensure(n.saturating_mul(8))?;
                let clocks = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
                let revealed = r.bits()?;
                Message::Detections { clocks, revealed }
            }
            FrameType::BasisReveal => Message::BasisReveal { revealed: r.bits()? },
            FrameType::SiftResult => Message::SiftResult { kept: r.u64()? },
            FrameType::QberSample => {
                let n = r.u32()? as usize;
                r.ensure(n.saturating_mul(4))?;
                let positions = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                let bits = r.bits()?;
                Message::QberSample { positions, bits }
            }
            FrameType::QberResult => Message::QberResult {
                mismatches: r.u32()?,
            },
            FrameType::ShuffleSeed => Message::ShuffleSeed {
                pass: r.u8()?,
                block_size: r.u32()?,
                seed: r.u64()?,
            },
            FrameType::Parities => {
                let n = r.u32()? as usize;
                r.ensure(n.saturating_mul(9))?;
                let queries = (0..n)
                    .map(|_| {
                        Ok(ParityQuery {
                            pass: r.u8()?,
                            start: r.u32()?,
                            end: r.u32()?,
                        })
                    })
                    .collect::<Result<Vec<_>, FrameError>>()?;
                Message::Parities { queries }
            }
            FrameType::ParityReply => Message::ParityReply { parities: r.bits()? },
            FrameType::PaSeed => Message::PaSeed {
                out_len: r.u32()?,
                seed: r.bits()?,
            },
            FrameType::KeyHash => Message::KeyHash { hash: r.u64()? },
            FrameType::Abort => {
                let rest = r.take(r.buf.len())?;
                Message::Abort {
                    reason: String::from_utf8_lossy(rest).into_owned(),
                }
            }
        };
        if !r.buf.is_empty() {
            return Err(r.err(format!("{} unexpected trailing bytes", r.buf.len())));
        }
        Ok(msg)
    }
}

/// Number of parity bits carried by a `PARITY_REPLY` frame, without a full decode.
pub fn parity_bits_in(frame: &Frame) -> u64 {
    if frame.kind != FrameType::ParityReply || frame.payload.len() < 4 {
        return 0;
    }
    u64::from(u32::from_le_bytes(frame.payload[..4].try_into().unwrap()))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn bits(&mut self, bits: &[Bit]) {
        self.u32(bits.len() as u32);
        self.bytes(&pack_bits(bits));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    kind: FrameType,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: String) -> FrameError {
        FrameError::Payload {
            kind: self.kind,
            reason,
        }
    }

    fn ensure(&self, n: usize) -> Result<(), FrameError> {
        if self.buf.len() < n {
            return Err(self.err(format!("need {n} bytes, have {}", self.buf.len())));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        self.ensure(n)?;
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FrameError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bits(&mut self) -> Result<Vec<Bit>, FrameError> {
        let n = self.u32()? as usize;
        let packed = self.take(n.div_ceil(8))?;
        Ok(unpack_bits(packed, n))
    }
}
