use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SessionError;
use crate::bits::{BitString, KeyString};
use crate::channel::{ChannelError, Responder};
use crate::ledger::LeakLedger;
use crate::wire::Message;
use crate::{Channel, Error, Result};

/// `m` distinct positions of `[0, len)` in increasing order, drawn from a
/// ChaCha8 stream seeded with `seed`.
pub fn sample_positions(len: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m >= len {
        return Err(Error::InvalidArgument(alloc::format!(
            "sample size {m} must be in 1..{len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = rand::seq::index::sample(&mut rng, len, m).into_vec();
    positions.sort_unstable();
    Ok(positions)
}

fn sampled_bits(key: &KeyString, positions: &[usize]) -> KeyString {
    let mut out = BitString::zeros(positions.len()).expect("non-empty sample");
    for (k, &i) in positions.iter().enumerate() {
        out.set(k, key.bit(i));
    }
    out
}

/// Bob's side of error estimation: discloses `m` sampled bits, learns the
/// mismatch count from Alice and returns the estimate with the sampled
/// positions removed from his key.
pub fn estimate_error_rate<C: Channel>(
    key: &KeyString,
    m: usize,
    seed: u64,
    channel: &mut C,
    ledger: &mut LeakLedger,
) -> Result<(f64, KeyString), SessionError> {
    let positions =
        sample_positions(key.len(), m, seed).map_err(|_| SessionError::Negotiation)?;
    channel.send(&Message::Sample {
        bits: sampled_bits(key, &positions),
    })?;
    ledger.estimation_bits += m as u64;
    let mismatches = match channel.recv()? {
        Message::Estimate { mismatches } if mismatches as usize <= m => mismatches,
        Message::Abort(r) => return Err(SessionError::PeerAborted(r)),
        _ => return Err(SessionError::Violation),
    };
    let rest = key
        .without_positions(&positions)
        .map_err(|_| SessionError::Violation)?;
    Ok((mismatches as f64 / m as f64, rest))
}

/// Alice's side of error estimation.
#[derive(Debug, Clone)]
pub struct EstimateResponder {
    key: KeyString,
    positions: Vec<usize>,
    result: Option<(f64, KeyString)>,
    done: bool,
}

impl EstimateResponder {
    pub fn new(key: KeyString, m: usize, seed: u64) -> Result<Self> {
        let positions = sample_positions(key.len(), m, seed)?;
        Ok(Self {
            key,
            positions,
            result: None,
            done: false,
        })
    }

    /// Estimate and shortened key, once Bob's sample has been answered.
    pub fn into_result(self) -> Option<(f64, KeyString)> {
        self.result
    }
}

impl Responder for EstimateResponder {
    fn respond(&mut self, msg: &Message) -> Option<Message> {
        self.done = true;
        match msg {
            Message::Sample { bits } if bits.len() == self.positions.len() => {
                let mine = sampled_bits(&self.key, &self.positions);
                let mismatches = mine.hamming_distance(bits).expect("lengths checked");
                let rest = self.key.without_positions(&self.positions).ok()?;
                self.result = Some((mismatches as f64 / bits.len() as f64, rest));
                Some(Message::Estimate {
                    mismatches: mismatches as u32,
                })
            }
            Message::Abort(_) => None,
            _ => Some(Message::Abort(crate::AbortReason::ProtocolViolation)),
        }
    }

    fn finished(&self) -> bool {
        self.done
    }

    fn channel_failed(&mut self, _err: &ChannelError) {
        self.done = true;
    }
}
