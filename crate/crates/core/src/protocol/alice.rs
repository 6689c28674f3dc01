use alloc::vec::Vec;

use super::bob::uses_syndrome;
use super::{PassEngine, ReconOutcome, SessionConfig, Status};
use crate::bits::{BlockPartition, KeyString};
use crate::channel::{ChannelError, Responder};
use crate::crc::crc64;
use crate::hamming::{block_syndrome, HammingParams};
use crate::ledger::LeakLedger;
use crate::wire::{Hello, Message};
use crate::{AbortReason, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitHello,
    /// Expecting parities for `pass` at block length `n`.
    AwaitParities { pass: u32, n: usize },
    /// Parities for `pass` answered; half-parity queries may follow.
    Answered { pass: u32, n: usize, last: bool },
    Done,
}

/// Alice's side: answers Bob's requests from her key, which never changes
/// except for the shared permutations.
#[derive(Debug, Clone)]
pub struct AliceResponder {
    engine: PassEngine,
    hello: Hello,
    first: usize,
    cap: usize,
    retries: u32,
    discard_leaked: bool,
    error_rate: f64,
    phase: Phase,
    ledger: LeakLedger,
    passes: u32,
    status: Option<Status>,
}

impl AliceResponder {
    pub fn new(key: KeyString, config: &SessionConfig) -> Result<Self> {
        Self::with_ledger(key, config, LeakLedger::default())
    }

    pub fn with_ledger(key: KeyString, config: &SessionConfig, ledger: LeakLedger) -> Result<Self> {
        Ok(Self {
            engine: PassEngine::new(key, config)?,
            hello: config.hello(),
            first: config.first_block_length(),
            cap: config.block_cap(),
            retries: config.crc_retries,
            discard_leaked: config.discard_leaked,
            error_rate: config.error_rate,
            phase: Phase::AwaitHello,
            ledger,
            passes: 0,
            status: None,
        })
    }

    /// Outcome so far; a session that never finished counts as a channel
    /// failure.
    pub fn outcome(&self) -> ReconOutcome {
        let status = self
            .status
            .unwrap_or(Status::Abandoned(AbortReason::Channel));
        ReconOutcome::finish(
            status,
            Some(self.engine.original_order()),
            self.ledger,
            self.passes,
            0,
            self.error_rate,
            self.engine.key().len(),
            self.discard_leaked,
        )
    }

    fn abort(&mut self, reason: AbortReason) -> Option<Message> {
        self.end(Status::Abandoned(reason));
        Some(Message::Abort(reason))
    }

    fn end(&mut self, status: Status) {
        self.status = Some(status);
        self.phase = Phase::Done;
    }

    fn answer_parities(&mut self, pass: u32, n: usize, bits: &KeyString) -> Option<Message> {
        let key = self.engine.key();
        let Ok(part) = BlockPartition::new(key.len(), n) else {
            return self.abort(AbortReason::ProtocolViolation);
        };
        if bits.len() != part.block_count() {
            return self.abort(AbortReason::ProtocolViolation);
        }
        self.ledger.parity_bits += bits.len() as u64;
        let mine = key.block_parities(n).expect("partition checked");
        let diff = mine.xor(bits).expect("lengths checked");
        let mut hamming = Vec::new();
        let mut bisect = Vec::new();
        for j in diff.iter_ones() {
            if uses_syndrome(&part, j) {
                hamming.push(j as u32);
            } else {
                bisect.push(j as u32);
            }
        }
        let rows = n.trailing_zeros();
        let syndromes: Vec<u32> = match HammingParams::for_block_length(n) {
            Ok(params) => hamming
                .iter()
                .map(|&j| block_syndrome(key, j as usize * n, params))
                .collect(),
            Err(_) => Vec::new(),
        };
        self.ledger.syndrome_bits += syndromes.len() as u64 * rows as u64;
        self.passes += 1;
        let last = diff.count_ones() == 0 || n >= self.cap;
        self.phase = Phase::Answered { pass, n, last };
        hamming.extend(bisect);
        Some(Message::Mismatches {
            pass,
            rows: rows as u8,
            blocks: hamming,
            syndromes,
        })
    }
}

impl Responder for AliceResponder {
    fn respond(&mut self, msg: &Message) -> Option<Message> {
        if let Message::Abort(r) = msg {
            self.end(Status::Abandoned(*r));
            return None;
        }
        match (self.phase, msg) {
            (Phase::AwaitHello, Message::Hello(h)) => {
                if *h == self.hello {
                    self.phase = Phase::AwaitParities {
                        pass: 0,
                        n: self.first,
                    };
                    Some(Message::Hello(self.hello))
                } else {
                    self.abort(AbortReason::Negotiation)
                }
            }
            (Phase::AwaitParities { pass, n }, Message::Parities { pass: p, bits }) if *p == pass => {
                self.answer_parities(pass, n, bits)
            }
            (Phase::Answered { pass, .. }, Message::HalfParityQuery { pass: p, start, end })
                if *p == pass =>
            {
                let (s, e) = (*start as usize, *end as usize);
                if s >= e || e > self.engine.key().len() {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                self.ledger.parity_bits += 1;
                Some(Message::HalfParity {
                    pass,
                    start: *start,
                    end: *end,
                    parity: self.engine.key().range_parity_unchecked(s, e),
                })
            }
            (
                Phase::Answered {
                    pass,
                    n,
                    last: false,
                },
                Message::Parities { pass: p, bits },
            ) if *p == pass + 1 => {
                if self.engine.permute().is_err() {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                self.answer_parities(pass + 1, n * 2, bits)
            }
            (Phase::Answered { pass, last: true, .. }, Message::Crc(digest)) => {
                self.ledger.crc_bits += 64;
                let equal = *digest == crc64(&self.engine.original_order());
                if equal {
                    self.end(Status::Success);
                } else if self.retries == 0 {
                    self.end(Status::Abandoned(AbortReason::CrcMismatch));
                } else {
                    self.retries -= 1;
                    if self.engine.permute().is_err() {
                        return self.abort(AbortReason::ProtocolViolation);
                    }
                    self.phase = Phase::AwaitParities {
                        pass: pass + 1,
                        n: self.first,
                    };
                }
                Some(Message::Verdict(equal))
            }
            (Phase::Done, _) => None,
            _ => self.abort(AbortReason::ProtocolViolation),
        }
    }

    fn finished(&self) -> bool {
        self.phase == Phase::Done
    }

    fn channel_failed(&mut self, _err: &ChannelError) {
        if self.status.is_none() {
            self.end(Status::Abandoned(AbortReason::Channel));
        }
    }
}
