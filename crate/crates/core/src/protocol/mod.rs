//! Pass-doubling Hamming reconciliation.
//!
//! Per pass `i` with block length `n_i`:
//!
//! 1. Bob sends the parity of each block; Alice compares with her own.
//! 2. Alice returns the mismatched block indices with her syndromes; Bob
//!    flips one bit per mismatched block (a trailing partial block is
//!    bisected instead).
//! 3. If every parity matched or `n_i` has reached `⌈N/2⌉`, the parties
//!    compare CRC-64 digests and keep or abandon the key. Otherwise both
//!    double `n_i`, apply the next two-register pair-swap permutation and
//!    run the next pass.
//!
//! Bob converges to Alice. [`reconcile`] runs either role over any
//! [`Channel`]; [`simulate`] runs both in-process.

mod alice;
pub(crate) mod bob;
mod estimate;

use alloc::vec::Vec;
use core::time::Duration;

use crate::bits::{BitString, KeyString};
use crate::channel::{ChannelError, ChannelStats, DirectChannel, TranscriptEntry};
use crate::crc::CRC64_XZ_ID;
use crate::ledger::{efficiency, LeakLedger};
use crate::lfsr::TAP_TABLE_VERSION;
use crate::permute::{apply_permutation, width_for, TwoLfsrPermuter};
use crate::wire::{Hello, ProtocolId, PROTOCOL_VERSION};
use crate::{Channel, Error, Result};

pub use alice::AliceResponder;
pub use bob::{drive, drive_observed, run_pass, PassSnapshot};
pub use estimate::{estimate_error_rate, sample_positions, EstimateResponder};

/// Smallest initial block length.
pub const MIN_INITIAL_BLOCK: usize = 8;

/// Upper bound on `n0 * p`.
pub const BLOCK_ERROR_BUDGET: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Alice,
    Bob,
}

/// Why a session ended without a shared key. The discriminant is the ABORT
/// reason code on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AbortReason {
    Negotiation = 1,
    ProtocolViolation = 2,
    CrcMismatch = 3,
    Channel = 4,
}

impl AbortReason {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::Negotiation),
            2 => Some(Self::ProtocolViolation),
            3 => Some(Self::CrcMismatch),
            4 => Some(Self::Channel),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Negotiation => "negotiation",
            Self::ProtocolViolation => "protocol-violation",
            Self::CrcMismatch => "crc-mismatch",
            Self::Channel => "channel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Abandoned(AbortReason),
}

impl Status {
    pub fn is_success(&self) -> bool {
        matches!(self, Status::Success)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub key_length: usize,
    pub error_rate: f64,
    pub seed1: u64,
    pub seed2: u64,
    pub crc_variant: u16,
    pub role: Role,
    /// Segment index carried in HELLO when a long key is split.
    pub segment: u32,
    /// Fresh pass sequences allowed after a CRC mismatch.
    pub crc_retries: u32,
    /// Drop `ledger.total()` bits from the tail of a successful key.
    pub discard_leaked: bool,
}

impl SessionConfig {
    pub fn new(key_length: usize, error_rate: f64, seed1: u64, seed2: u64, role: Role) -> Self {
        Self {
            key_length,
            error_rate,
            seed1,
            seed2,
            crc_variant: CRC64_XZ_ID,
            role,
            segment: 0,
            crc_retries: 0,
            discard_leaked: false,
        }
    }

    pub fn with_role(&self, role: Role) -> Self {
        Self { role, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.key_length == 0 {
            return Err(Error::EmptySegment);
        }
        initial_block_length(self.error_rate)?;
        if self.crc_variant != CRC64_XZ_ID {
            return Err(Error::InvalidArgument(alloc::format!(
                "unsupported CRC variant {}",
                self.crc_variant
            )));
        }
        let w = width_for(self.key_length);
        for seed in [self.seed1, self.seed2] {
            if seed == 0 || seed >> w != 0 {
                return Err(Error::InvalidSeed { seed, width: w });
            }
        }
        Ok(())
    }

    /// First block length actually used: `n0`, clipped to the largest
    /// power of two not above the key length.
    pub fn first_block_length(&self) -> usize {
        let n0 = initial_block_length(self.error_rate).unwrap_or(MIN_INITIAL_BLOCK);
        let max_pow = 1usize << (usize::BITS - 1 - self.key_length.leading_zeros());
        n0.min(max_pow)
    }

    /// `⌈N/2⌉`; the last pass is the first whose block length reaches it.
    pub fn block_cap(&self) -> usize {
        self.key_length.div_ceil(2)
    }

    pub fn hello(&self) -> Hello {
        Hello {
            version: PROTOCOL_VERSION,
            protocol: ProtocolId::HammingLfsr,
            segment: self.segment,
            key_length: self.key_length as u64,
            error_rate: self.error_rate,
            initial_block: self.first_block_length() as u32,
            seed1: self.seed1,
            seed2: self.seed2,
            crc_variant: self.crc_variant,
            tap_table_version: TAP_TABLE_VERSION,
            passes: 0,
        }
    }
}

/// Largest power of two `n0` with `n0 * p <= 0.8`, never below 8.
pub fn initial_block_length(p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidErrorRate(p));
    }
    let mut n = 1usize;
    while (2 * n) as f64 * p <= BLOCK_ERROR_BUDGET + 1e-12 {
        n *= 2;
    }
    Ok(n.max(MIN_INITIAL_BLOCK))
}

/// Progress of one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassState {
    pub pass_index: u32,
    pub block_length: usize,
    pub mismatched_blocks: Vec<u32>,
    pub corrections_made: u64,
}

impl PassState {
    pub fn new(pass_index: u32, block_length: usize) -> Self {
        Self {
            pass_index,
            block_length,
            mismatched_blocks: Vec::new(),
            corrections_made: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutcome {
    pub status: Status,
    /// Reconciled key in original bit order; present on success unless
    /// discarding the leaked bits left nothing.
    pub final_key: Option<KeyString>,
    pub ledger: LeakLedger,
    pub passes_run: u32,
    /// Bits flipped locally (always zero for Alice).
    pub corrections: u64,
    pub efficiency: Option<f64>,
    /// Request/reply exchanges after the handshake, counted at Bob; zero
    /// at Alice.
    pub round_trips: u64,
    /// Filled in by callers that own a clock.
    pub wall_time: Duration,
}

impl ReconOutcome {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn finish(
        status: Status,
        key: Option<KeyString>,
        ledger: LeakLedger,
        passes_run: u32,
        corrections: u64,
        config_p: f64,
        key_length: usize,
        discard_leaked: bool,
    ) -> Self {
        let final_key = match (status, key) {
            (Status::Success, Some(k)) if discard_leaked => {
                let keep = k.len().saturating_sub(ledger.total() as usize);
                if keep == 0 {
                    None
                } else {
                    k.truncated(keep).ok()
                }
            }
            (Status::Success, k) => k,
            _ => None,
        };
        Self {
            status,
            final_key,
            ledger,
            passes_run,
            corrections,
            efficiency: efficiency(ledger.total(), key_length, config_p),
            round_trips: 0,
            wall_time: Duration::ZERO,
        }
    }
}

/// Key state shared by both roles: the key in its current permuted order
/// plus the map back to original positions.
#[derive(Debug, Clone)]
pub(crate) struct PassEngine {
    key: KeyString,
    origin: Vec<u32>,
    permuter: TwoLfsrPermuter,
    permutations: u32,
}

impl PassEngine {
    pub(crate) fn new(key: KeyString, config: &SessionConfig) -> Result<Self> {
        config.validate()?;
        if key.len() != config.key_length {
            return Err(Error::LengthMismatch {
                left: key.len(),
                right: config.key_length,
            });
        }
        Ok(Self {
            origin: (0..key.len() as u32).collect(),
            permuter: TwoLfsrPermuter::new(config.seed1, config.seed2, key.len())?,
            key,
            permutations: 0,
        })
    }

    pub(crate) fn key(&self) -> &KeyString {
        &self.key
    }

    pub(crate) fn key_mut(&mut self) -> &mut KeyString {
        &mut self.key
    }

    /// Applies the next pair-swap permutation to the key.
    pub(crate) fn permute(&mut self) -> Result<()> {
        let plan = self.permuter.next_plan()?;
        self.key = apply_permutation(&self.key, &plan)?;
        let mut origin = alloc::vec![0u32; self.origin.len()];
        for (i, &o) in self.origin.iter().enumerate() {
            origin[plan.image(i)] = o;
        }
        self.origin = origin;
        self.permutations += 1;
        Ok(())
    }

    /// The key with every permutation undone.
    pub(crate) fn original_order(&self) -> KeyString {
        let mut out = BitString::zeros(self.key.len()).expect("non-empty key");
        for j in self.key.iter_ones() {
            out.set(self.origin[j] as usize, true);
        }
        out
    }
}

/// Why a session stopped early.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("peer aborted: {0:?}")]
    PeerAborted(AbortReason),
    #[error("protocol violation")]
    Violation,
    #[error("parameter disagreement")]
    Negotiation,
}

impl SessionError {
    pub fn reason(&self) -> AbortReason {
        match self {
            SessionError::Channel(_) => AbortReason::Channel,
            SessionError::PeerAborted(r) => *r,
            SessionError::Violation => AbortReason::ProtocolViolation,
            SessionError::Negotiation => AbortReason::Negotiation,
        }
    }
}

/// Runs one side of a session. Configuration errors are reported before
/// anything is sent; everything after that ends in a [`ReconOutcome`].
pub fn reconcile<C: Channel>(
    key: KeyString,
    config: &SessionConfig,
    channel: &mut C,
) -> Result<ReconOutcome> {
    reconcile_with_ledger(key, config, channel, LeakLedger::default())
}

/// [`reconcile`] starting from bits already disclosed (error estimation).
pub fn reconcile_with_ledger<C: Channel>(
    key: KeyString,
    config: &SessionConfig,
    channel: &mut C,
    ledger: LeakLedger,
) -> Result<ReconOutcome> {
    match config.role {
        Role::Bob => drive(key, config, channel, ledger),
        Role::Alice => {
            let mut alice = AliceResponder::with_ledger(key, config, ledger)?;
            crate::channel::serve(&mut alice, channel);
            Ok(alice.outcome())
        }
    }
}

/// Both sides of an in-process session.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub alice: ReconOutcome,
    pub bob: ReconOutcome,
    /// Bob's endpoint counters.
    pub stats: ChannelStats,
    pub transcript: Option<Vec<TranscriptEntry>>,
}

/// Runs a complete session with Alice answering inline.
pub fn simulate(alice_key: KeyString, bob_key: KeyString, config: &SessionConfig) -> Result<Simulation> {
    simulate_inner(alice_key, bob_key, config, false)
}

/// [`simulate`], keeping the frame transcript.
pub fn simulate_recorded(
    alice_key: KeyString,
    bob_key: KeyString,
    config: &SessionConfig,
) -> Result<Simulation> {
    simulate_inner(alice_key, bob_key, config, true)
}

fn simulate_inner(
    alice_key: KeyString,
    bob_key: KeyString,
    config: &SessionConfig,
    record: bool,
) -> Result<Simulation> {
    let alice = AliceResponder::new(alice_key, &config.with_role(Role::Alice))?;
    let mut channel = DirectChannel::new(alice);
    if record {
        channel = channel.recording();
    }
    let bob = drive(bob_key, &config.with_role(Role::Bob), &mut channel, LeakLedger::default())?;
    let (alice, stats, transcript) = channel.into_parts();
    Ok(Simulation {
        alice: alice.outcome(),
        bob,
        stats,
        transcript,
    })
}
