//! BINARY bisection and Cascade with full backtracking.
//!
//! Pass 0 splits the key into contiguous blocks of `k1` bits. Pass `u > 0`
//! shuffles the positions with a seeded ChaCha8 stream and splits the
//! shuffled order into blocks of `k1 * 2^u`. Every mismatched block is
//! bisected down to one error, and each correction toggles the known
//! parity of the block holding that bit in every pass run so far; newly
//! odd blocks are bisected in turn, smallest first.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::{BitString, KeyString};
use crate::channel::{ChannelError, ChannelStats, DirectChannel, Responder};
use crate::crc::{crc64, CRC64_XZ_ID};
use crate::ledger::LeakLedger;
use crate::protocol::bob::{bisect, handshake, rounds_since, verdict};
use crate::protocol::{ReconOutcome, Role, SessionError, Simulation, Status};
use crate::wire::{Hello, Message, ProtocolId, PROTOCOL_VERSION};
use crate::{AbortReason, Channel, Error, Result};

pub const DEFAULT_PASSES: u16 = 4;

const PASS_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Tabulated first-pass optima by error rate.
const OPTIMA: [(f64, usize); 4] = [(0.01, 73), (0.05, 14), (0.10, 7), (0.15, 5)];

/// First-pass block length: the tabulated optimum when `p` is one of the
/// tabulated rates, `⌊0.73 / p⌋` otherwise.
pub fn cascade_initial_block(p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidErrorRate(p));
    }
    if let Some(&(_, k)) = OPTIMA.iter().find(|(q, _)| (p - q).abs() < 1e-12) {
        return Ok(k);
    }
    Ok(((0.73 / p) as usize).max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub key_length: usize,
    pub error_rate: f64,
    pub k1: usize,
    pub pass_count: u16,
    pub shuffle_seed: u64,
    pub role: Role,
    pub segment: u32,
    pub crc_variant: u16,
    pub discard_leaked: bool,
}

impl CascadeConfig {
    pub fn new(key_length: usize, error_rate: f64, shuffle_seed: u64, role: Role) -> Result<Self> {
        Ok(Self {
            key_length,
            error_rate,
            k1: cascade_initial_block(error_rate)?,
            pass_count: DEFAULT_PASSES,
            shuffle_seed,
            role,
            segment: 0,
            crc_variant: CRC64_XZ_ID,
            discard_leaked: false,
        })
    }

    pub fn with_role(&self, role: Role) -> Self {
        Self { role, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.key_length == 0 {
            return Err(Error::EmptySegment);
        }
        if !(self.error_rate > 0.0 && self.error_rate < 0.5) {
            return Err(Error::InvalidErrorRate(self.error_rate));
        }
        if self.k1 == 0 || self.pass_count == 0 {
            return Err(Error::InvalidArgument("k1 and pass count must be positive".into()));
        }
        if self.crc_variant != CRC64_XZ_ID {
            return Err(Error::InvalidArgument(alloc::format!(
                "unsupported CRC variant {}",
                self.crc_variant
            )));
        }
        Ok(())
    }

    /// `k_u = k1 * 2^u`, clipped to the key length.
    pub fn block_length(&self, pass: u16) -> usize {
        self.k1
            .checked_shl(pass as u32)
            .filter(|k| k >> pass == self.k1)
            .unwrap_or(usize::MAX)
            .min(self.key_length)
    }

    pub fn hello(&self) -> Hello {
        Hello {
            version: PROTOCOL_VERSION,
            protocol: ProtocolId::Cascade,
            segment: self.segment,
            key_length: self.key_length as u64,
            error_rate: self.error_rate,
            initial_block: self.k1 as u32,
            seed1: self.shuffle_seed,
            seed2: 0,
            crc_variant: self.crc_variant,
            tap_table_version: 0,
            passes: self.pass_count,
        }
    }

    pub fn layout(&self, pass: u16) -> PassLayout {
        let n = self.key_length;
        let mut order: Vec<u32> = (0..n as u32).collect();
        if pass > 0 {
            let seed = self.shuffle_seed ^ (pass as u64).wrapping_mul(PASS_SEED_STRIDE);
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let mut position = alloc::vec![0u32; n];
        for (at, &q) in order.iter().enumerate() {
            position[q as usize] = at as u32;
        }
        PassLayout {
            order,
            position,
            block: self.block_length(pass),
            identity: pass == 0,
        }
    }
}

/// Assignment of key positions to the blocks of one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassLayout {
    order: Vec<u32>,
    position: Vec<u32>,
    block: usize,
    identity: bool,
}

impl PassLayout {
    /// Key position at each slot of the pass ordering.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn block_length(&self) -> usize {
        self.block
    }

    pub fn block_count(&self) -> usize {
        self.order.len().div_ceil(self.block)
    }

    /// Slots of block `b` in the pass ordering.
    pub fn block_range(&self, b: usize) -> Range<usize> {
        b * self.block..((b + 1) * self.block).min(self.order.len())
    }

    pub fn block_of(&self, key_position: usize) -> usize {
        self.position[key_position] as usize / self.block
    }

    /// Parity of `key` over slots `[start, end)` of the ordering.
    pub fn parity(&self, key: &KeyString, start: usize, end: usize) -> bool {
        if self.identity {
            return key.range_parity_unchecked(start, end);
        }
        self.order[start..end]
            .iter()
            .fold(false, |acc, &q| acc ^ key.bit(q as usize))
    }

    pub fn parities(&self, key: &KeyString) -> BitString {
        if self.identity {
            return key.block_parities(self.block).expect("block length checked");
        }
        let mut out = BitString::zeros(self.block_count()).expect("non-empty key");
        for (at, &q) in self.order.iter().enumerate() {
            if key.bit(q as usize) {
                out.flip(at / self.block).expect("in range");
            }
        }
        out
    }
}

/// Bisects block slots `range` of a pass whose parity differs from
/// Alice's and returns the key position found.
pub fn binary_locate<C: Channel>(
    key: &KeyString,
    layout: &PassLayout,
    pass: u32,
    range: Range<usize>,
    channel: &mut C,
    ledger: &mut LeakLedger,
) -> Result<usize, SessionError> {
    let slot = bisect(pass, range.start, range.end, channel, ledger, |a, b| {
        layout.parity(key, a, b)
    })?;
    Ok(layout.order[slot] as usize)
}

/// Bob's bookkeeping after a correction, for callers that audit it.
pub struct CascadeView<'a> {
    pub key: &'a KeyString,
    layouts: &'a [PassLayout],
    odd: &'a [BitString],
}

impl CascadeView<'_> {
    pub fn passes(&self) -> usize {
        self.layouts.len()
    }

    pub fn layout(&self, pass: usize) -> &PassLayout {
        &self.layouts[pass]
    }

    /// Whether Bob believes block `b` of `pass` holds an odd number of
    /// errors.
    pub fn is_odd(&self, pass: usize, b: usize) -> bool {
        self.odd[pass].bit(b)
    }
}

pub fn cascade_drive<C: Channel>(
    key: KeyString,
    config: &CascadeConfig,
    channel: &mut C,
) -> Result<ReconOutcome> {
    cascade_drive_observed(key, config, channel, |_| {})
}

/// Runs Bob's side of a Cascade session, reporting every correction.
pub fn cascade_drive_observed<C, F>(
    key: KeyString,
    config: &CascadeConfig,
    channel: &mut C,
    mut observe: F,
) -> Result<ReconOutcome>
where
    C: Channel,
    F: FnMut(&CascadeView<'_>),
{
    config.validate()?;
    if key.len() != config.key_length {
        return Err(Error::LengthMismatch {
            left: key.len(),
            right: config.key_length,
        });
    }
    let mut bob = CascadeBob {
        key,
        layouts: Vec::new(),
        odd: Vec::new(),
        pending: BTreeSet::new(),
        ledger: LeakLedger::default(),
        corrections: 0,
        greeted: None,
    };
    let status = match bob.run(config, channel, &mut observe) {
        Ok(s) => s,
        Err(e) => {
            if matches!(e, SessionError::Violation | SessionError::Negotiation) {
                let _ = channel.send(&Message::Abort(e.reason()));
            }
            Status::Abandoned(e.reason())
        }
    };
    let mut outcome = ReconOutcome::finish(
        status,
        Some(bob.key),
        bob.ledger,
        bob.layouts.len() as u32,
        bob.corrections,
        config.error_rate,
        config.key_length,
        config.discard_leaked,
    );
    outcome.round_trips = rounds_since(channel, bob.greeted);
    Ok(outcome)
}

struct CascadeBob {
    key: KeyString,
    layouts: Vec<PassLayout>,
    /// Per pass, blocks whose parity is known to differ from Alice's.
    odd: Vec<BitString>,
    /// Odd blocks awaiting bisection as `(length, pass, block)`.
    pending: BTreeSet<(usize, u32, u32)>,
    ledger: LeakLedger,
    corrections: u64,
    greeted: Option<ChannelStats>,
}

impl CascadeBob {
    fn run<C, F>(
        &mut self,
        config: &CascadeConfig,
        channel: &mut C,
        observe: &mut F,
    ) -> core::result::Result<Status, SessionError>
    where
        C: Channel,
        F: FnMut(&CascadeView<'_>),
    {
        handshake(channel, config.hello())?;
        self.greeted = Some(channel.stats());
        for u in 0..config.pass_count {
            let layout = config.layout(u);
            channel.send(&Message::CascadeParityRequest { pass: u as u32 })?;
            let remote = match channel.recv()? {
                Message::CascadeParities { pass, bits }
                    if pass == u as u32 && bits.len() == layout.block_count() =>
                {
                    bits
                }
                Message::Abort(r) => return Err(SessionError::PeerAborted(r)),
                _ => return Err(SessionError::Violation),
            };
            self.ledger.parity_bits += remote.len() as u64;
            let diff = layout.parities(&self.key).xor(&remote).expect("lengths checked");
            for b in diff.iter_ones() {
                self.pending
                    .insert((layout.block_range(b).len(), u as u32, b as u32));
            }
            self.layouts.push(layout);
            self.odd.push(diff);

            while let Some((_, pass, b)) = self.pending.pop_first() {
                let layout = &self.layouts[pass as usize];
                let q = binary_locate(
                    &self.key,
                    layout,
                    pass,
                    layout.block_range(b as usize),
                    channel,
                    &mut self.ledger,
                )?;
                self.key.flip(q).expect("position in range");
                self.corrections += 1;
                for (w, layout) in self.layouts.iter().enumerate() {
                    let bw = layout.block_of(q);
                    let odd = &mut self.odd[w];
                    odd.flip(bw).expect("block in range");
                    let entry = (layout.block_range(bw).len(), w as u32, bw as u32);
                    if odd.bit(bw) {
                        self.pending.insert(entry);
                    } else {
                        self.pending.remove(&entry);
                    }
                }
                observe(&CascadeView {
                    key: &self.key,
                    layouts: &self.layouts,
                    odd: &self.odd,
                });
            }
        }
        if verdict(channel, &self.key, &mut self.ledger)? {
            Ok(Status::Success)
        } else {
            Ok(Status::Abandoned(AbortReason::CrcMismatch))
        }
    }
}

/// Alice's side of a Cascade session.
#[derive(Debug, Clone)]
pub struct CascadeResponder {
    key: KeyString,
    config: CascadeConfig,
    layouts: Vec<PassLayout>,
    greeted: bool,
    ledger: LeakLedger,
    status: Option<Status>,
}

impl CascadeResponder {
    pub fn new(key: KeyString, config: &CascadeConfig) -> Result<Self> {
        config.validate()?;
        if key.len() != config.key_length {
            return Err(Error::LengthMismatch {
                left: key.len(),
                right: config.key_length,
            });
        }
        Ok(Self {
            key,
            config: config.clone(),
            layouts: Vec::new(),
            greeted: false,
            ledger: LeakLedger::default(),
            status: None,
        })
    }

    pub fn outcome(&self) -> ReconOutcome {
        ReconOutcome::finish(
            self.status.unwrap_or(Status::Abandoned(AbortReason::Channel)),
            Some(self.key.clone()),
            self.ledger,
            self.layouts.len() as u32,
            0,
            self.config.error_rate,
            self.config.key_length,
            self.config.discard_leaked,
        )
    }

    fn abort(&mut self, reason: AbortReason) -> Option<Message> {
        self.status = Some(Status::Abandoned(reason));
        Some(Message::Abort(reason))
    }
}

impl Responder for CascadeResponder {
    fn respond(&mut self, msg: &Message) -> Option<Message> {
        if self.status.is_some() {
            return None;
        }
        match msg {
            Message::Abort(r) => {
                self.status = Some(Status::Abandoned(*r));
                None
            }
            Message::Hello(h) if !self.greeted => {
                let mine = self.config.hello();
                if *h != mine {
                    return self.abort(AbortReason::Negotiation);
                }
                self.greeted = true;
                Some(Message::Hello(mine))
            }
            Message::CascadeParityRequest { pass }
                if self.greeted
                    && *pass as usize == self.layouts.len()
                    && *pass < self.config.pass_count as u32 =>
            {
                let layout = self.config.layout(*pass as u16);
                let bits = layout.parities(&self.key);
                self.ledger.parity_bits += bits.len() as u64;
                self.layouts.push(layout);
                Some(Message::CascadeParities { pass: *pass, bits })
            }
            Message::HalfParityQuery { pass, start, end }
                if (*pass as usize) < self.layouts.len()
                    && start < end
                    && *end as usize <= self.key.len() =>
            {
                self.ledger.parity_bits += 1;
                let parity =
                    self.layouts[*pass as usize].parity(&self.key, *start as usize, *end as usize);
                Some(Message::HalfParity {
                    pass: *pass,
                    start: *start,
                    end: *end,
                    parity,
                })
            }
            Message::Crc(digest) if self.layouts.len() == self.config.pass_count as usize => {
                self.ledger.crc_bits += 64;
                let equal = *digest == crc64(&self.key);
                self.status = Some(if equal {
                    Status::Success
                } else {
                    Status::Abandoned(AbortReason::CrcMismatch)
                });
                Some(Message::Verdict(equal))
            }
            _ => self.abort(AbortReason::ProtocolViolation),
        }
    }

    fn finished(&self) -> bool {
        self.status.is_some()
    }

    fn channel_failed(&mut self, _err: &ChannelError) {
        if self.status.is_none() {
            self.status = Some(Status::Abandoned(AbortReason::Channel));
        }
    }
}

/// Runs a complete Cascade session in-process.
pub fn cascade_simulate(
    alice_key: KeyString,
    bob_key: KeyString,
    config: &CascadeConfig,
) -> Result<Simulation> {
    let alice = CascadeResponder::new(alice_key, &config.with_role(Role::Alice))?;
    let mut channel = DirectChannel::new(alice);
    let bob = cascade_drive(bob_key, &config.with_role(Role::Bob), &mut channel)?;
    let (alice, stats, transcript) = channel.into_parts();
    Ok(Simulation {
        alice: alice.outcome(),
        bob,
        stats,
        transcript,
    })
}
