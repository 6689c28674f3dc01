use super::{PassEngine, PassState, ReconOutcome, SessionConfig, SessionError, Status};
use crate::bits::{BlockPartition, KeyString};
use crate::channel::ChannelStats;
use crate::crc::crc64;
use crate::hamming::{block_syndrome, decode_flip, HammingParams};
use crate::ledger::LeakLedger;
use crate::wire::{Hello, Message};
use crate::{AbortReason, Channel, Result};

/// Bob's view of one finished pass, for callers that audit the protocol.
#[derive(Debug, Clone)]
pub struct PassSnapshot<'a> {
    pub state: &'a PassState,
    /// Bob's key in pass order, before and after this pass's corrections.
    pub before: &'a KeyString,
    pub after: &'a KeyString,
    /// Permutations applied so far, including this pass's.
    pub permutations: u32,
}

/// Whether block `j` of `part` is corrected by syndrome rather than by
/// bisection.
pub(crate) fn uses_syndrome(part: &BlockPartition, j: usize) -> bool {
    part.block_length() >= 4 && !part.is_partial(j)
}

/// One pass at Bob: send parities, receive Alice's mismatches, correct.
pub fn run_pass<C: Channel>(
    key: &mut KeyString,
    state: &mut PassState,
    channel: &mut C,
    ledger: &mut LeakLedger,
) -> core::result::Result<(), SessionError> {
    let n = state.block_length;
    let part = BlockPartition::new(key.len(), n).map_err(|_| SessionError::Violation)?;
    let parities = key.block_parities(n).map_err(|_| SessionError::Violation)?;
    channel.send(&Message::Parities {
        pass: state.pass_index,
        bits: parities,
    })?;
    ledger.parity_bits += part.block_count() as u64;

    let (blocks, syndromes) = match channel.recv()? {
        Message::Mismatches {
            pass,
            rows,
            blocks,
            syndromes,
        } if pass == state.pass_index && rows as u32 == n.trailing_zeros() => (blocks, syndromes),
        Message::Abort(r) => return Err(SessionError::PeerAborted(r)),
        _ => return Err(SessionError::Violation),
    };
    let count = part.block_count() as u32;
    if blocks.windows(2).any(|w| w[0] >= w[1])
        || blocks.last().is_some_and(|&b| b >= count)
        || syndromes.len() > blocks.len()
    {
        return Err(SessionError::Violation);
    }
    for (k, &b) in blocks.iter().enumerate() {
        if (k < syndromes.len()) != uses_syndrome(&part, b as usize) {
            return Err(SessionError::Violation);
        }
    }
    ledger.syndrome_bits += syndromes.len() as u64 * n.trailing_zeros() as u64;

    state.mismatched_blocks = blocks.clone();
    for (k, &b) in blocks.iter().enumerate() {
        let range = part.block_range(b as usize);
        let local = match syndromes.get(k) {
            Some(&remote) => {
                let params = HammingParams::for_block_length(n).map_err(|_| SessionError::Violation)?;
                let mine = block_syndrome(key, range.start, params);
                range.start + decode_flip(mine ^ remote, params)
            }
            None => bisect(state.pass_index, range.start, range.end, channel, ledger, |a, b| {
                key.range_parity_unchecked(a, b)
            })?,
        };
        key.flip(local).map_err(|_| SessionError::Violation)?;
        state.corrections_made += 1;
    }
    Ok(())
}

/// Bisects `[start, end)` of the pass ordering, whose parity differs from
/// Alice's, down to one position by querying her half parities.
/// `local_parity(a, b)` is Bob's parity of `[a, b)` in the same ordering.
/// Charges one parity bit per query.
pub(crate) fn bisect<C, P>(
    pass: u32,
    mut start: usize,
    mut end: usize,
    channel: &mut C,
    ledger: &mut LeakLedger,
    local_parity: P,
) -> core::result::Result<usize, SessionError>
where
    C: Channel,
    P: Fn(usize, usize) -> bool,
{
    while end - start > 1 {
        let mid = start + (end - start).div_ceil(2);
        channel.send(&Message::HalfParityQuery {
            pass,
            start: start as u32,
            end: mid as u32,
        })?;
        let remote = match channel.recv()? {
            Message::HalfParity {
                pass: p,
                start: s,
                end: e,
                parity,
            } if p == pass && s as usize == start && e as usize == mid => parity,
            Message::Abort(r) => return Err(SessionError::PeerAborted(r)),
            _ => return Err(SessionError::Violation),
        };
        ledger.parity_bits += 1;
        if local_parity(start, mid) != remote {
            end = mid;
        } else {
            start = mid;
        }
    }
    Ok(start)
}

/// Sends HELLO and checks that Alice echoes the same parameters.
pub(crate) fn handshake<C: Channel>(
    channel: &mut C,
    hello: Hello,
) -> core::result::Result<(), SessionError> {
    channel.send(&Message::Hello(hello))?;
    match channel.recv()? {
        Message::Hello(h) if h == hello => Ok(()),
        Message::Abort(r) => Err(SessionError::PeerAborted(r)),
        Message::Hello(_) => Err(SessionError::Negotiation),
        _ => Err(SessionError::Violation),
    }
}

/// Sends the CRC of `key` and returns Alice's verdict.
pub(crate) fn verdict<C: Channel>(
    channel: &mut C,
    key: &KeyString,
    ledger: &mut LeakLedger,
) -> core::result::Result<bool, SessionError> {
    channel.send(&Message::Crc(crc64(key)))?;
    ledger.crc_bits += 64;
    match channel.recv()? {
        Message::Verdict(v) => Ok(v),
        Message::Abort(r) => Err(SessionError::PeerAborted(r)),
        _ => Err(SessionError::Violation),
    }
}

/// Runs Bob's side of a whole session over `channel`.
pub fn drive<C: Channel>(
    key: KeyString,
    config: &SessionConfig,
    channel: &mut C,
    ledger: LeakLedger,
) -> Result<ReconOutcome> {
    drive_observed(key, config, channel, ledger, |_| {})
}

/// [`drive`], reporting every completed pass to `observe`.
pub fn drive_observed<C, F>(
    key: KeyString,
    config: &SessionConfig,
    channel: &mut C,
    ledger: LeakLedger,
    mut observe: F,
) -> Result<ReconOutcome>
where
    C: Channel,
    F: FnMut(&PassSnapshot<'_>),
{
    let mut engine = PassEngine::new(key, config)?;
    let mut session = BobSession {
        ledger,
        passes: 0,
        corrections: 0,
        greeted: None,
    };
    let status = match session.run(&mut engine, config, channel, &mut observe) {
        Ok(status) => status,
        Err(e) => {
            if matches!(e, SessionError::Violation | SessionError::Negotiation) {
                let _ = channel.send(&Message::Abort(e.reason()));
            }
            Status::Abandoned(e.reason())
        }
    };
    let mut outcome = ReconOutcome::finish(
        status,
        Some(engine.original_order()),
        session.ledger,
        session.passes,
        session.corrections,
        config.error_rate,
        config.key_length,
        config.discard_leaked,
    );
    outcome.round_trips = rounds_since(channel, session.greeted);
    Ok(outcome)
}

pub(crate) fn rounds_since<C: Channel>(channel: &C, greeted: Option<ChannelStats>) -> u64 {
    greeted.map_or(0, |g| channel.stats().since(&g).round_trips)
}

struct BobSession {
    ledger: LeakLedger,
    passes: u32,
    corrections: u64,
    greeted: Option<ChannelStats>,
}

impl BobSession {
    fn run<C, F>(
        &mut self,
        engine: &mut PassEngine,
        config: &SessionConfig,
        channel: &mut C,
        observe: &mut F,
    ) -> core::result::Result<Status, SessionError>
    where
        C: Channel,
        F: FnMut(&PassSnapshot<'_>),
    {
        handshake(channel, config.hello())?;
        self.greeted = Some(channel.stats());

        let first = config.first_block_length();
        let cap = config.block_cap();
        let mut retries = config.crc_retries;
        let mut pass_index = 0u32;
        loop {
            let mut n = first;
            loop {
                if pass_index > 0 {
                    engine.permute().map_err(|_| SessionError::Violation)?;
                }
                let before = engine.key().clone();
                let mut state = PassState::new(pass_index, n);
                run_pass(engine.key_mut(), &mut state, channel, &mut self.ledger)?;
                self.passes += 1;
                self.corrections += state.corrections_made;
                observe(&PassSnapshot {
                    state: &state,
                    before: &before,
                    after: engine.key(),
                    permutations: engine.permutations,
                });
                pass_index += 1;
                if state.mismatched_blocks.is_empty() || n >= cap {
                    break;
                }
                n *= 2;
            }

            if verdict(channel, &engine.original_order(), &mut self.ledger)? {
                return Ok(Status::Success);
            }
            if retries == 0 {
                return Ok(Status::Abandoned(AbortReason::CrcMismatch));
            }
            retries -= 1;
        }
    }
}
