//! Length-prefixed frame codec.
//!
//! ```text
//! +---------------------+----------+-----------------+
//! | payload length (4)  | type (1) | payload (len)   |
//! | u32 little-endian   |          |                 |
//! +---------------------+----------+-----------------+
//! ```
//!
//! Classical tags run 0x01..=0x0D. Tag 0x80 carries simulated quantum pulses,
//! the stand-in for the fiber itself; it is never part of the classical
//! protocol.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const HEADER_LEN: usize = 5;

/// Upper bound accepted when reading from a stream.
pub const MAX_PAYLOAD: u32 = 1 << 28;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown frame type tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("payload of {0} bytes exceeds limit")]
    TooLarge(u64),
    #[error("malformed {kind:?} payload: {reason}")]
    Payload { kind: FrameType, reason: String },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    Params = 0x02,
    Detections = 0x03,
    BasisReveal = 0x04,
    SiftResult = 0x05,
    QberSample = 0x06,
    QberResult = 0x07,
    ShuffleSeed = 0x08,
    Parities = 0x09,
    ParityReply = 0x0A,
    PaSeed = 0x0B,
    KeyHash = 0x0C,
    Abort = 0x0D,
    QuantumPulses = 0x80,
}

impl FrameType {
    pub const ALL: [FrameType; 14] = [
        FrameType::Hello,
        FrameType::Params,
        FrameType::Detections,
        FrameType::BasisReveal,
        FrameType::SiftResult,
        FrameType::QberSample,
        FrameType::QberResult,
        FrameType::ShuffleSeed,
        FrameType::Parities,
        FrameType::ParityReply,
        FrameType::PaSeed,
        FrameType::KeyHash,
        FrameType::Abort,
        FrameType::QuantumPulses,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self, FrameError> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.tag() == tag)
            .ok_or(FrameError::UnknownTag(tag))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let len = u32::try_from(frame.payload.len()).expect("payload length must fit in u32");
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&len.to_le_bytes());
    out.push(frame.kind.tag());
    out.extend_from_slice(&frame.payload);
    out
}

/// Decodes exactly one frame occupying the whole buffer.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let kind = FrameType::from_tag(bytes[4])?;
    let end = HEADER_LEN + len;
    if bytes.len() < end {
        return Err(FrameError::Truncated {
            needed: end,
            available: bytes.len(),
        });
    }
    if bytes.len() > end {
        return Err(FrameError::TrailingBytes(bytes.len() - end));
    }
    Ok(Frame::new(kind, bytes[HEADER_LEN..].to_vec()))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), FrameError> {
    w.write_all(&encode_frame(frame))?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let len = u32::from_le_bytes(header[..4].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(FrameError::TooLarge(u64::from(len)));
    }
    let kind = FrameType::from_tag(header[4])?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame::new(kind, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hello_empty_layout() {
        let bytes = encode_frame(&Frame::new(FrameType::Hello, vec![]));
        assert_eq!(bytes, vec![0x00, 0x00, 0x00, 0x00, 0x01]);
    }

    #[test]
    fn parity_reply_layout() {
        let bytes = encode_frame(&Frame::new(FrameType::ParityReply, vec![0xAB]));
        assert_eq!(bytes, vec![0x01, 0x00, 0x00, 0x00, 0x0A, 0xAB]);
    }

    #[test]
    fn tags_follow_declaration_order() {
        for (i, t) in FrameType::ALL[..13].iter().enumerate() {
            assert_eq!(t.tag() as usize, i + 1);
        }
    }

    #[test]
    fn truncated_and_unknown() {
        assert!(matches!(
            decode_frame(&[0, 0, 0]),
            Err(FrameError::Truncated { .. })
        ));
        assert!(matches!(
            decode_frame(&[2, 0, 0, 0, 0x01, 0xff]),
            Err(FrameError::Truncated { needed: 7, available: 6 })
        ));
        assert!(matches!(
            decode_frame(&[0, 0, 0, 0, 0x0E]),
            Err(FrameError::UnknownTag(0x0E))
        ));
        assert!(matches!(
            decode_frame(&[0, 0, 0, 0, 0x01, 0x00]),
            Err(FrameError::TrailingBytes(1))
        ));
    }

    #[test]
    fn stream_io() {
        let frames = [
            Frame::new(FrameType::Params, vec![1, 2, 3]),
            Frame::new(FrameType::Abort, b"bye".to_vec()),
        ];
        let mut buf = Vec::new();
        for f in &frames {
            write_frame(&mut buf, f).unwrap();
        }
        let mut cursor = io::Cursor::new(buf);
        for f in &frames {
            assert_eq!(&read_frame(&mut cursor).unwrap(), f);
        }
        assert!(matches!(read_frame(&mut cursor), Err(FrameError::Io(_))));
    }

    fn any_frame() -> impl Strategy<Value = Frame> {
        (
            proptest::sample::select(FrameType::ALL.to_vec()),
            proptest::collection::vec(any::<u8>(), 0..64),
        )
            .prop_map(|(k, p)| Frame::new(k, p))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn roundtrip(frame in any_frame()) {
            prop_assert_eq!(decode_frame(&encode_frame(&frame)).unwrap(), frame);
        }
    }
}
