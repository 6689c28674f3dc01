//! The contract both parties talk through.
//!
//! Bob drives every exchange: he sends a request and waits for the answer.
//! Alice is a [`Responder`] that maps each incoming message to at most one
//! reply. A networked Alice runs [`serve`] over a real transport; in
//! simulations [`DirectChannel`] calls the responder inline, so a whole
//! session runs on one thread with no IO.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use crate::ledger::LeakLedger;
use crate::wire::{Message, WireError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("peer closed the channel")]
    Closed,
    #[error("transport failure: {0}")]
    Io(String),
    #[error("malformed frame: {0}")]
    Wire(#[from] WireError),
}

/// Per-endpoint traffic counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub frames_sent: u64,
    pub frames_received: u64,
    /// Frame bits in both directions, headers included.
    pub payload_bits: u64,
    /// Receives that followed at least one send.
    pub round_trips: u64,
    pub injected_latency: Duration,
    /// Key-derived bits seen on the wire, counted from message contents.
    pub disclosed: LeakLedger,
}

impl ChannelStats {
    pub fn record_send(&mut self, msg: &Message, frame_len: usize) {
        self.frames_sent += 1;
        self.payload_bits += frame_len as u64 * 8;
        self.disclosed += msg.disclosed_bits();
    }

    pub fn record_recv(&mut self, msg: &Message, frame_len: usize, after_send: bool) {
        self.frames_received += 1;
        self.payload_bits += frame_len as u64 * 8;
        self.disclosed += msg.disclosed_bits();
        if after_send {
            self.round_trips += 1;
        }
    }

    /// Counters accumulated since `earlier`.
    pub fn since(&self, earlier: &ChannelStats) -> ChannelStats {
        ChannelStats {
            frames_sent: self.frames_sent - earlier.frames_sent,
            frames_received: self.frames_received - earlier.frames_received,
            payload_bits: self.payload_bits - earlier.payload_bits,
            round_trips: self.round_trips - earlier.round_trips,
            injected_latency: self.injected_latency.saturating_sub(earlier.injected_latency),
            disclosed: LeakLedger {
                parity_bits: self.disclosed.parity_bits - earlier.disclosed.parity_bits,
                syndrome_bits: self.disclosed.syndrome_bits - earlier.disclosed.syndrome_bits,
                crc_bits: self.disclosed.crc_bits - earlier.disclosed.crc_bits,
                estimation_bits: self.disclosed.estimation_bits
                    - earlier.disclosed.estimation_bits,
            },
        }
    }
}

pub trait Channel {
    fn send(&mut self, msg: &Message) -> Result<(), ChannelError>;
    fn recv(&mut self) -> Result<Message, ChannelError>;
    fn stats(&self) -> ChannelStats;
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn send(&mut self, msg: &Message) -> Result<(), ChannelError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message, ChannelError> {
        (**self).recv()
    }

    fn stats(&self) -> ChannelStats {
        (**self).stats()
    }
}

/// Passive side of a session.
pub trait Responder {
    fn respond(&mut self, msg: &Message) -> Option<Message>;

    /// True once the session has reached a verdict or aborted.
    fn finished(&self) -> bool;

    /// Called when the transport fails before the session finished.
    fn channel_failed(&mut self, err: &ChannelError);
}

/// Runs `responder` against `channel` until it finishes.
pub fn serve<R: Responder, C: Channel>(responder: &mut R, channel: &mut C) {
    while !responder.finished() {
        let msg = match channel.recv() {
            Ok(m) => m,
            Err(e) => {
                responder.channel_failed(&e);
                return;
            }
        };
        if let Some(reply) = responder.respond(&msg) {
            if let Err(e) = channel.send(&reply) {
                responder.channel_failed(&e);
                return;
            }
        }
    }
}

/// One frame of a session transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    /// True when the frame travelled from the recording endpoint.
    pub outbound: bool,
    pub frame: Vec<u8>,
}

/// In-memory channel whose far end is a [`Responder`] invoked inline.
pub struct DirectChannel<R> {
    responder: R,
    inbox: VecDeque<Message>,
    stats: ChannelStats,
    awaiting: bool,
    transcript: Option<Vec<TranscriptEntry>>,
}

impl<R: Responder> DirectChannel<R> {
    pub fn new(responder: R) -> Self {
        Self {
            responder,
            inbox: VecDeque::new(),
            stats: ChannelStats::default(),
            awaiting: false,
            transcript: None,
        }
    }

    pub fn recording(mut self) -> Self {
        self.transcript = Some(Vec::new());
        self
    }

    pub fn responder(&self) -> &R {
        &self.responder
    }

    pub fn into_parts(self) -> (R, ChannelStats, Option<Vec<TranscriptEntry>>) {
        (self.responder, self.stats, self.transcript)
    }
}

impl<R: Responder> Channel for DirectChannel<R> {
    fn send(&mut self, msg: &Message) -> Result<(), ChannelError> {
        if self.responder.finished() {
            return Err(ChannelError::Closed);
        }
        let frame = msg.encode_frame();
        self.stats.record_send(msg, frame.len());
        self.awaiting = true;
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptEntry {
                outbound: true,
                frame,
            });
        }
        if let Some(reply) = self.responder.respond(msg) {
            self.inbox.push_back(reply);
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, ChannelError> {
        let msg = self.inbox.pop_front().ok_or(ChannelError::Closed)?;
        let frame = msg.encode_frame();
        self.stats.record_recv(&msg, frame.len(), self.awaiting);
        self.awaiting = false;
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptEntry {
                outbound: false,
                frame,
            });
        }
        Ok(msg)
    }

    fn stats(&self) -> ChannelStats {
        self.stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo {
        left: usize,
    }

    impl Responder for Echo {
        fn respond(&mut self, msg: &Message) -> Option<Message> {
            self.left -= 1;
            Some(msg.clone())
        }
        fn finished(&self) -> bool {
            self.left == 0
        }
        fn channel_failed(&mut self, _: &ChannelError) {}
    }

    #[test]
    fn direct_channel_counts_round_trips() {
        let mut ch = DirectChannel::new(Echo { left: 3 }).recording();
        for i in 0..3 {
            ch.send(&Message::Crc(i)).unwrap();
            assert_eq!(ch.recv().unwrap(), Message::Crc(i));
        }
        assert_eq!(ch.send(&Message::Crc(9)), Err(ChannelError::Closed));
        assert_eq!(ch.recv(), Err(ChannelError::Closed));
        let (_, stats, transcript) = ch.into_parts();
        assert_eq!(stats.round_trips, 3);
        assert_eq!(stats.frames_sent, 3);
        assert_eq!(stats.frames_received, 3);
        assert_eq!(stats.disclosed.crc_bits, 6 * 64);
        assert_eq!(stats.payload_bits, 6 * 13 * 8);
        assert_eq!(transcript.unwrap().len(), 6);
    }
}
