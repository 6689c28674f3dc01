//! Protocol selection, key segmentation and parallel sessions.
//!
//! Long keys are cut into segments of at most [`DEFAULT_SEGMENT`] bits.
//! Each segment is an independent session whose HELLO carries its index;
//! in-process runs spread segments over worker threads, a TCP connection
//! runs them one after another.

use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use qkdrecon_core::cascade::{cascade_drive, CascadeConfig, CascadeResponder};
use qkdrecon_core::channel::serve;
use qkdrecon_core::permute::width_for;
use qkdrecon_core::protocol::{drive, AliceResponder};
use qkdrecon_core::{
    AbortReason, BitString, Channel, DirectChannel, Error, KeyString, LeakLedger, ReconOutcome,
    Result, Role, Simulation, Status,
};

pub const DEFAULT_SEGMENT: usize = 65536;
pub const DEFAULT_PARALLEL: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Hamming,
    Cascade,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Hamming => "hamming-lfsr",
            Protocol::Cascade => "cascade",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hamming-lfsr" | "hamming" => Ok(Protocol::Hamming),
            "cascade" => Ok(Protocol::Cascade),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

/// Maps `seed` into the nonzero state space of the register that drives a
/// segment of `len` bits. Seeds already in range are kept.
pub fn fit_seed(seed: u64, len: usize) -> u64 {
    let states = (1u64 << width_for(len)) - 1;
    if seed != 0 && seed <= states {
        seed
    } else {
        1 + seed.wrapping_sub(1) % states
    }
}

/// Everything both parties agree on before the first HELLO, apart from
/// the key itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionParams {
    pub protocol: Protocol,
    pub error_rate: f64,
    /// First LFSR seed, or the shuffle seed for Cascade.
    pub seed1: u64,
    pub seed2: u64,
    pub crc_retries: u32,
    pub discard_leaked: bool,
}

impl SessionParams {
    pub fn new(protocol: Protocol, error_rate: f64, seed1: u64, seed2: u64) -> Self {
        Self {
            protocol,
            error_rate,
            seed1,
            seed2,
            crc_retries: 0,
            discard_leaked: false,
        }
    }

    pub fn hamming_config(&self, len: usize, segment: u32, role: Role) -> qkdrecon_core::SessionConfig {
        let mut c = qkdrecon_core::SessionConfig::new(
            len,
            self.error_rate,
            fit_seed(self.seed1, len),
            fit_seed(self.seed2, len),
            role,
        );
        c.segment = segment;
        c.crc_retries = self.crc_retries;
        c.discard_leaked = self.discard_leaked;
        c
    }

    pub fn cascade_config(&self, len: usize, segment: u32, role: Role) -> Result<CascadeConfig> {
        let mut c = CascadeConfig::new(len, self.error_rate, self.seed1, role)?;
        c.segment = segment;
        c.discard_leaked = self.discard_leaked;
        Ok(c)
    }

    /// Runs Bob's side of one segment over `channel`.
    pub fn run_bob<C: Channel>(&self, key: KeyString, segment: u32, channel: &mut C) -> Result<ReconOutcome> {
        let start = Instant::now();
        let len = key.len();
        let mut out = match self.protocol {
            Protocol::Hamming => drive(
                key,
                &self.hamming_config(len, segment, Role::Bob),
                channel,
                LeakLedger::default(),
            )?,
            Protocol::Cascade => cascade_drive(key, &self.cascade_config(len, segment, Role::Bob)?, channel)?,
        };
        out.wall_time = start.elapsed();
        Ok(out)
    }

    /// Serves Alice's side of one segment over `channel`.
    pub fn run_alice<C: Channel>(&self, key: KeyString, segment: u32, channel: &mut C) -> Result<ReconOutcome> {
        let start = Instant::now();
        let len = key.len();
        let mut out = match self.protocol {
            Protocol::Hamming => {
                let mut alice = AliceResponder::new(key, &self.hamming_config(len, segment, Role::Alice))?;
                serve(&mut alice, channel);
                alice.outcome()
            }
            Protocol::Cascade => {
                let mut alice = CascadeResponder::new(key, &self.cascade_config(len, segment, Role::Alice)?)?;
                serve(&mut alice, channel);
                alice.outcome()
            }
        };
        out.wall_time = start.elapsed();
        Ok(out)
    }

    /// One segment in-process with Alice answering inline.
    pub fn simulate(&self, alice: KeyString, bob: KeyString, segment: u32, record: bool) -> Result<Simulation> {
        if alice.len() != bob.len() {
            return Err(Error::LengthMismatch {
                left: alice.len(),
                right: bob.len(),
            });
        }
        let len = alice.len();
        let start = Instant::now();
        let (alice, mut bob, stats, transcript) = match self.protocol {
            Protocol::Hamming => {
                let responder = AliceResponder::new(alice, &self.hamming_config(len, segment, Role::Alice))?;
                let mut ch = DirectChannel::new(responder);
                if record {
                    ch = ch.recording();
                }
                let bob = drive(bob, &self.hamming_config(len, segment, Role::Bob), &mut ch, LeakLedger::default())?;
                let (a, stats, t) = ch.into_parts();
                (a.outcome(), bob, stats, t)
            }
            Protocol::Cascade => {
                let responder = CascadeResponder::new(alice, &self.cascade_config(len, segment, Role::Alice)?)?;
                let mut ch = DirectChannel::new(responder);
                if record {
                    ch = ch.recording();
                }
                let bob = cascade_drive(bob, &self.cascade_config(len, segment, Role::Bob)?, &mut ch)?;
                let (a, stats, t) = ch.into_parts();
                (a.outcome(), bob, stats, t)
            }
        };
        bob.wall_time = start.elapsed();
        Ok(Simulation {
            alice,
            bob,
            stats,
            transcript,
        })
    }
}

/// Cuts `key` into consecutive segments of at most `segment` bits.
pub fn split(key: &KeyString, segment: usize) -> Result<Vec<KeyString>> {
    if segment == 0 {
        return Err(Error::InvalidArgument("segment length must be positive".into()));
    }
    (0..key.len())
        .step_by(segment)
        .map(|s| key.slice(s..(s + segment).min(key.len())))
        .collect()
}

pub fn join(parts: &[KeyString]) -> Result<KeyString> {
    BitString::concat(parts)
}

/// Every segment of one reconciled key.
#[derive(Debug, Clone)]
pub struct SegmentedRun {
    pub segments: Vec<Simulation>,
    pub wall_time: Duration,
}

impl SegmentedRun {
    /// Success if every segment succeeded, else the first failure.
    pub fn status(&self) -> Status {
        self.segments
            .iter()
            .map(|s| s.bob.status)
            .find(|s| !s.is_success())
            .unwrap_or(Status::Success)
    }

    pub fn ledger(&self) -> LeakLedger {
        self.segments.iter().fold(LeakLedger::default(), |mut acc, s| {
            acc += s.bob.ledger;
            acc
        })
    }

    /// Largest pass count over the segments.
    pub fn passes(&self) -> u32 {
        self.segments.iter().map(|s| s.bob.passes_run).max().unwrap_or(0)
    }

    pub fn round_trips(&self) -> u64 {
        self.segments.iter().map(|s| s.stats.round_trips).sum()
    }

    pub fn tap(&self) -> LeakLedger {
        self.segments.iter().fold(LeakLedger::default(), |mut acc, s| {
            acc += s.stats.disclosed;
            acc
        })
    }

    /// Bob's and Alice's reconciled keys, present only when every segment
    /// succeeded.
    pub fn final_keys(&self) -> Option<(KeyString, KeyString)> {
        let bob: Option<Vec<_>> = self.segments.iter().map(|s| s.bob.final_key.clone()).collect();
        let alice: Option<Vec<_>> = self.segments.iter().map(|s| s.alice.final_key.clone()).collect();
        Some((join(&bob?).ok()?, join(&alice?).ok()?))
    }
}

/// Reconciles `bob` against `alice` segment by segment in-process, with at
/// most `parallel` sessions running at once.
pub fn reconcile_parallel(
    params: &SessionParams,
    alice: &KeyString,
    bob: &KeyString,
    segment: usize,
    parallel: usize,
) -> Result<SegmentedRun> {
    let a = split(alice, segment)?;
    let b = split(bob, segment)?;
    if a.len() != b.len() || alice.len() != bob.len() {
        return Err(Error::LengthMismatch {
            left: alice.len(),
            right: bob.len(),
        });
    }
    let workers = parallel.clamp(1, a.len());
    let start = Instant::now();
    let mut slots: Vec<Option<Result<Simulation>>> = (0..a.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (a, b) = (&a, &b);
                scope.spawn(move || {
                    (w..a.len())
                        .step_by(workers)
                        .map(|i| (i, params.simulate(a[i].clone(), b[i].clone(), i as u32, false)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("session worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let segments = slots
        .into_iter()
        .map(|s| s.expect("every segment assigned"))
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentedRun {
        segments,
        wall_time: start.elapsed(),
    })
}

/// Process exit code for a finished run.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Success => 0,
        Status::Abandoned(AbortReason::Channel) => 3,
        Status::Abandoned(_) => 2,
    }
}

fn run_segments<F>(key: &KeyString, segment: usize, mut run: F) -> Result<Vec<ReconOutcome>>
where
    F: FnMut(KeyString, u32) -> Result<ReconOutcome>,
{
    let mut out = Vec::new();
    for (i, part) in split(key, segment)?.into_iter().enumerate() {
        let o = run(part, i as u32)?;
        let dead = o.status == Status::Abandoned(AbortReason::Channel);
        out.push(o);
        if dead {
            break;
        }
    }
    Ok(out)
}

/// Bob's side of every segment, one after another over one channel. Stops
/// after the first segment lost to a channel failure.
pub fn drive_segments<C: Channel>(
    params: &SessionParams,
    key: &KeyString,
    segment: usize,
    channel: &mut C,
) -> Result<Vec<ReconOutcome>> {
    run_segments(key, segment, |k, i| params.run_bob(k, i, channel))
}

/// Alice's counterpart of [`drive_segments`].
pub fn serve_segments<C: Channel>(
    params: &SessionParams,
    key: &KeyString,
    segment: usize,
    channel: &mut C,
) -> Result<Vec<ReconOutcome>> {
    run_segments(key, segment, |k, i| params.run_alice(k, i, channel))
}

/// Overall status of per-segment outcomes; a missing segment counts as a
/// channel failure.
pub fn combined_status(outcomes: &[ReconOutcome], segments: usize) -> Status {
    outcomes
        .iter()
        .map(|o| o.status)
        .find(|s| !s.is_success())
        .unwrap_or(if outcomes.len() == segments {
            Status::Success
        } else {
            Status::Abandoned(AbortReason::Channel)
        })
}
