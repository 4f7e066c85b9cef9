//! Reliable ordered frame transports.
//!
//! Every transport moves encoded bytes, so each frame crosses
//! [`encode_frame`]/[`decode_frame`] even in-process.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;

use thiserror::Error;

use crate::session::frame::{decode_frame, encode_frame, read_frame, Frame, FrameError};
use crate::session::messages::parity_bits_in;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the connection")]
    Closed,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Transport: Send {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Frame, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        (**self).send(frame)
    }
    fn recv(&mut self) -> Result<Frame, TransportError> {
        (**self).recv()
    }
}

/// In-memory byte pipe between two threads.
pub struct MemoryTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected endpoints.
pub fn memory_pair() -> (MemoryTransport, MemoryTransport) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        MemoryTransport { tx: tx_a, rx: rx_a },
        MemoryTransport { tx: tx_b, rx: rx_b },
    )
}

impl Transport for MemoryTransport {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.tx
            .send(encode_frame(frame))
            .map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let bytes = self.rx.recv().map_err(|_| TransportError::Closed)?;
        Ok(decode_frame(&bytes)?)
    }
}

/// Frames over any byte stream, e.g. a TCP socket.
pub struct StreamTransport<R: Read, W: Write> {
    reader: BufReader<R>,
    writer: BufWriter<W>,
}

impl<R: Read, W: Write> StreamTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self {
            reader: BufReader::with_capacity(1 << 16, reader),
            writer: BufWriter::with_capacity(1 << 16, writer),
        }
    }
}

impl StreamTransport<TcpStream, TcpStream> {
    pub fn tcp(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(reader, stream))
    }
}

impl<R: Read + Send, W: Write + Send> Transport for StreamTransport<R, W> {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.writer.write_all(&encode_frame(frame))?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        match read_frame(&mut self.reader) {
            Ok(f) => Ok(f),
            Err(FrameError::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(TransportError::Closed)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Counters observed by a [`Tap`].
#[derive(Debug, Default)]
pub struct TapCounters {
    pub frames_sent: AtomicU64,
    pub frames_received: AtomicU64,
    pub bytes_sent: AtomicU64,
    pub parity_bits_sent: AtomicU64,
    pub parity_bits_received: AtomicU64,
}

impl TapCounters {
    pub fn parity_bits(&self) -> u64 {
        self.parity_bits_sent.load(Ordering::Relaxed)
            + self.parity_bits_received.load(Ordering::Relaxed)
    }
}

/// Pass-through wrapper that audits traffic, independently of the protocol code.
pub struct Tap<T> {
    inner: T,
    counters: Arc<TapCounters>,
}

impl<T: Transport> Tap<T> {
    pub fn new(inner: T) -> (Self, Arc<TapCounters>) {
        let counters = Arc::new(TapCounters::default());
        (
            Self {
                inner,
                counters: counters.clone(),
            },
            counters,
        )
    }
}

impl<T: Transport> Transport for Tap<T> {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.inner.send(frame)?;
        let c = &self.counters;
        c.frames_sent.fetch_add(1, Ordering::Relaxed);
        c.bytes_sent
            .fetch_add(frame.payload.len() as u64 + 5, Ordering::Relaxed);
        c.parity_bits_sent
            .fetch_add(parity_bits_in(frame), Ordering::Relaxed);
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let frame = self.inner.recv()?;
        self.counters.frames_received.fetch_add(1, Ordering::Relaxed);
        self.counters
            .parity_bits_received
            .fetch_add(parity_bits_in(&frame), Ordering::Relaxed);
        Ok(frame)
    }
}
