//! Framed transports: a threaded in-process pair and TCP.
//!
//! Both carry the same frames (`u32` big-endian payload length, one tag
//! byte, payload) and expose the same [`Channel`] contract through
//! [`Endpoint`], which also keeps the traffic counters, optional per-frame
//! latency and an optional transcript.

use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;
use std::time::Duration;

use qkdrecon_core::channel::TranscriptEntry;
use qkdrecon_core::wire::{parse_header, Message, FRAME_HEADER_LEN};
use qkdrecon_core::{Channel, ChannelError, ChannelStats};

/// Frames buffered per direction before a sender blocks.
pub const DEFAULT_CAPACITY: usize = 64;

/// Moves whole encoded frames.
pub trait FrameLink {
    fn write_frame(&mut self, frame: Vec<u8>) -> Result<(), ChannelError>;
    fn read_frame(&mut self) -> Result<Vec<u8>, ChannelError>;
}

/// One side of an in-process duplex with bounded queues.
pub struct MemoryLink {
    tx: SyncSender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl FrameLink for MemoryLink {
    fn write_frame(&mut self, frame: Vec<u8>) -> Result<(), ChannelError> {
        self.tx.send(frame).map_err(|_| ChannelError::Closed)
    }

    fn read_frame(&mut self) -> Result<Vec<u8>, ChannelError> {
        self.rx.recv().map_err(|_| ChannelError::Closed)
    }
}

pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }
}

fn io_error(e: io::Error) -> ChannelError {
    match e.kind() {
        ErrorKind::UnexpectedEof
        | ErrorKind::ConnectionReset
        | ErrorKind::ConnectionAborted
        | ErrorKind::BrokenPipe => ChannelError::Closed,
        _ => ChannelError::Io(e.to_string()),
    }
}

impl FrameLink for TcpLink {
    fn write_frame(&mut self, frame: Vec<u8>) -> Result<(), ChannelError> {
        self.writer.write_all(&frame).map_err(io_error)?;
        self.writer.flush().map_err(io_error)
    }

    fn read_frame(&mut self) -> Result<Vec<u8>, ChannelError> {
        let mut header = [0u8; FRAME_HEADER_LEN];
        self.reader.read_exact(&mut header).map_err(io_error)?;
        let (len, _) = parse_header(&header)?;
        let mut frame = vec![0u8; FRAME_HEADER_LEN + len];
        frame[..FRAME_HEADER_LEN].copy_from_slice(&header);
        self.reader
            .read_exact(&mut frame[FRAME_HEADER_LEN..])
            .map_err(io_error)?;
        Ok(frame)
    }
}

/// A [`Channel`] over any [`FrameLink`].
pub struct Endpoint<L> {
    link: L,
    stats: ChannelStats,
    awaiting: bool,
    latency: Duration,
    transcript: Option<Vec<TranscriptEntry>>,
}

impl<L: FrameLink> Endpoint<L> {
    pub fn new(link: L) -> Self {
        Self {
            link,
            stats: ChannelStats::default(),
            awaiting: false,
            latency: Duration::ZERO,
            transcript: None,
        }
    }

    /// Delays every outgoing frame by `latency`.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn recording(mut self) -> Self {
        self.transcript = Some(Vec::new());
        self
    }

    pub fn take_transcript(&mut self) -> Option<Vec<TranscriptEntry>> {
        self.transcript.take()
    }

    fn log(&mut self, outbound: bool, frame: &[u8]) {
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptEntry {
                outbound,
                frame: frame.to_vec(),
            });
        }
    }
}

impl<L: FrameLink> Channel for Endpoint<L> {
    fn send(&mut self, msg: &Message) -> Result<(), ChannelError> {
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
            self.stats.injected_latency += self.latency;
        }
        let frame = msg.encode_frame();
        self.stats.record_send(msg, frame.len());
        self.awaiting = true;
        self.log(true, &frame);
        self.link.write_frame(frame)
    }

    fn recv(&mut self) -> Result<Message, ChannelError> {
        let frame = self.link.read_frame()?;
        let msg = Message::decode_frame(&frame)?;
        self.stats.record_recv(&msg, frame.len(), self.awaiting);
        self.awaiting = false;
        self.log(false, &frame);
        Ok(msg)
    }

    fn stats(&self) -> ChannelStats {
        self.stats
    }
}

/// Two connected in-process endpoints, `capacity` frames per direction.
pub fn memory_pair(capacity: usize) -> (Endpoint<MemoryLink>, Endpoint<MemoryLink>) {
    let (a_tx, b_rx) = sync_channel(capacity);
    let (b_tx, a_rx) = sync_channel(capacity);
    (
        Endpoint::new(MemoryLink { tx: a_tx, rx: a_rx }),
        Endpoint::new(MemoryLink { tx: b_tx, rx: b_rx }),
    )
}

pub fn listen<A: ToSocketAddrs>(addr: A) -> io::Result<TcpListener> {
    TcpListener::bind(addr)
}

pub fn accept(listener: &TcpListener) -> io::Result<Endpoint<TcpLink>> {
    let (stream, _) = listener.accept()?;
    Ok(Endpoint::new(TcpLink::new(stream)?))
}

pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Endpoint<TcpLink>> {
    Ok(Endpoint::new(TcpLink::new(TcpStream::connect(addr)?)?))
}
