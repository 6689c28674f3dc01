//! Seeded experiments and their CSV records.
//!
//! Every row carries enough to rebuild its inputs: the protocol label, `N`,
//! the noise seed (ChaCha8, see [`crate::noise`]) and the session seeds.
//! [`replay`] reruns a row and yields the same deterministic columns.
//!
//! Protocol labels are a base name optionally followed by `/key=value`
//! options: `hamming-lfsr`, `hamming-lfsr/retries=5`, `cascade`,
//! `perm-2lfsr/n=16`, `perm-1lfsr/n=16`.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use qkdrecon_core::permute::{one_lfsr_permutation, separation_score, two_lfsr_permutation};
use qkdrecon_core::{efficiency, AbortReason, LeakLedger, ReconOutcome, Status};

use crate::noise::key_pair;
use crate::session::{
    combined_status, reconcile_parallel, Protocol, SegmentedRun, SessionParams, DEFAULT_SEGMENT,
};

pub const CSV_HEADER: [&str; 16] = [
    "protocol",
    "N",
    "p_true",
    "seed_noise",
    "seed1",
    "seed2",
    "status",
    "passes",
    "leak_parity",
    "leak_syndrome",
    "leak_crc",
    "leak_total",
    "f",
    "d_tot",
    "time_ms",
    "throughput_bps",
];

/// Error-rate grid of the efficiency sweep: each n0 boundary flanked by
/// its neighbours.
pub const EFFICIENCY_GRID: [f64; 12] = [
    0.01, 0.0125, 0.015, 0.0225, 0.025, 0.0275, 0.045, 0.05, 0.055, 0.09, 0.1, 0.11,
];

pub const TIME_GRID: [f64; 8] = [0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04];

/// Key length of the timing sweep: eight 64 Kbit segments.
pub const TIME_KEY_LENGTH: usize = 8 * DEFAULT_SEGMENT;

pub const BLOCK_SWEEP: [usize; 6] = [16, 64, 256, 1024, 4096, 16384];

/// One CSV row. Columns that do not apply to a row are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub protocol: String,
    pub key_length: usize,
    pub p_true: Option<f64>,
    pub seed_noise: Option<u64>,
    pub seed1: u64,
    pub seed2: Option<u64>,
    pub status: Option<Status>,
    pub passes: Option<u32>,
    pub ledger: Option<LeakLedger>,
    pub f: Option<f64>,
    pub d_tot: Option<f64>,
    pub time_ms: Option<f64>,
    pub throughput_bps: Option<f64>,
    /// Bits still differing after a successful run. Not written to CSV.
    pub residual_errors: Option<usize>,
    /// Bob's channel round trips. Not written to CSV.
    pub round_trips: Option<u64>,
}

pub fn status_label(status: Status) -> String {
    match status {
        Status::Success => "success".to_string(),
        Status::Abandoned(r) => format!("abandoned:{}", r.as_str()),
    }
}

fn parse_status(s: &str) -> anyhow::Result<Status> {
    if s == "success" {
        return Ok(Status::Success);
    }
    let reason = s.strip_prefix("abandoned:").ok_or_else(|| anyhow!("bad status `{s}`"))?;
    (1..=4)
        .filter_map(AbortReason::from_u8)
        .find(|r| r.as_str() == reason)
        .map(Status::Abandoned)
        .ok_or_else(|| anyhow!("bad abort reason `{reason}`"))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn field<T: std::str::FromStr>(s: &str, name: &str) -> anyhow::Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| anyhow!("bad {name} value `{s}`"))
}

impl ExperimentRecord {
    fn blank(protocol: String, key_length: usize, seed1: u64) -> Self {
        Self {
            protocol,
            key_length,
            p_true: None,
            seed_noise: None,
            seed1,
            seed2: None,
            status: None,
            passes: None,
            ledger: None,
            f: None,
            d_tot: None,
            time_ms: None,
            throughput_bps: None,
            residual_errors: None,
            round_trips: None,
        }
    }

    pub fn to_row(&self) -> Vec<String> {
        let l = self.ledger;
        vec![
            self.protocol.clone(),
            self.key_length.to_string(),
            opt(self.p_true),
            opt(self.seed_noise),
            self.seed1.to_string(),
            opt(self.seed2),
            self.status.map(status_label).unwrap_or_default(),
            opt(self.passes),
            opt(l.map(|l| l.parity_bits)),
            opt(l.map(|l| l.syndrome_bits)),
            opt(l.map(|l| l.crc_bits)),
            opt(l.map(|l| l.total())),
            opt(self.f),
            opt(self.d_tot),
            opt(self.time_ms),
            opt(self.throughput_bps),
        ]
    }

    pub fn from_row(row: &csv::StringRecord) -> anyhow::Result<Self> {
        if row.len() != CSV_HEADER.len() {
            bail!("expected {} columns, found {}", CSV_HEADER.len(), row.len());
        }
        let c = |i: usize| row.get(i).unwrap_or("");
        let ledger = match (
            field::<u64>(c(8), "leak_parity")?,
            field::<u64>(c(9), "leak_syndrome")?,
            field::<u64>(c(10), "leak_crc")?,
            field::<u64>(c(11), "leak_total")?,
        ) {
            (Some(parity_bits), Some(syndrome_bits), Some(crc_bits), Some(total)) => Some(LeakLedger {
                parity_bits,
                syndrome_bits,
                crc_bits,
                estimation_bits: total - parity_bits - syndrome_bits - crc_bits,
            }),
            _ => None,
        };
        Ok(Self {
            protocol: c(0).to_string(),
            key_length: field(c(1), "N")?.ok_or_else(|| anyhow!("missing N"))?,
            p_true: field(c(2), "p_true")?,
            seed_noise: field(c(3), "seed_noise")?,
            seed1: field(c(4), "seed1")?.ok_or_else(|| anyhow!("missing seed1"))?,
            seed2: field(c(5), "seed2")?,
            status: if c(6).is_empty() { None } else { Some(parse_status(c(6))?) },
            passes: field(c(7), "passes")?,
            ledger,
            f: field(c(12), "f")?,
            d_tot: field(c(13), "d_tot")?,
            time_ms: field(c(14), "time_ms")?,
            throughput_bps: field(c(15), "throughput_bps")?,
            residual_errors: None,
            round_trips: None,
        })
    }

    /// The row with its timing columns cleared.
    pub fn without_timing(&self) -> Self {
        Self {
            time_ms: None,
            throughput_bps: None,
            residual_errors: None,
            round_trips: None,
            ..self.clone()
        }
    }
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> anyhow::Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        bail!("unexpected CSV header");
    }
    r.records()
        .map(|row| ExperimentRecord::from_row(&row?))
        .collect()
}

/// Protocol label with the options that change the outcome.
pub fn protocol_label(params: &SessionParams, segment: usize) -> String {
    let mut label = params.protocol.name().to_string();
    if params.protocol == Protocol::Hamming && params.crc_retries > 0 {
        label += &format!("/retries={}", params.crc_retries);
    }
    if segment != DEFAULT_SEGMENT {
        label += &format!("/segment={segment}");
    }
    label
}

fn parse_label(label: &str) -> anyhow::Result<(&str, Vec<(&str, usize)>)> {
    let mut parts = label.split('/');
    let base = parts.next().unwrap_or("");
    let opts = parts
        .map(|o| {
            let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("bad label option `{o}`"))?;
            Ok((k, v.parse::<usize>().with_context(|| format!("bad label option `{o}`"))?))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((base, opts))
}

/// Row for Bob's per-segment outcomes of one key. Residual and timing
/// columns are left for the caller.
pub fn record_outcomes(
    params: &SessionParams,
    key_length: usize,
    seed_noise: u64,
    segment: usize,
    bob: &[ReconOutcome],
) -> ExperimentRecord {
    let ledger = bob.iter().fold(LeakLedger::default(), |mut acc, o| {
        acc += o.ledger;
        acc
    });
    let mut r = ExperimentRecord::blank(protocol_label(params, segment), key_length, params.seed1);
    r.p_true = Some(params.error_rate);
    r.seed_noise = Some(seed_noise);
    r.seed2 = Some(if params.protocol == Protocol::Hamming { params.seed2 } else { 0 });
    r.status = Some(combined_status(bob, key_length.div_ceil(segment)));
    r.passes = Some(bob.iter().map(|o| o.passes_run).max().unwrap_or(0));
    r.ledger = Some(ledger);
    r.f = efficiency(ledger.total(), key_length, params.error_rate);
    r.round_trips = Some(bob.iter().map(|o| o.round_trips).sum());
    r
}

fn record_run(
    params: &SessionParams,
    key_length: usize,
    seed_noise: u64,
    segment: usize,
    run: &SegmentedRun,
) -> ExperimentRecord {
    let bob: Vec<ReconOutcome> = run.segments.iter().map(|s| s.bob.clone()).collect();
    let mut r = record_outcomes(params, key_length, seed_noise, segment, &bob);
    r.residual_errors = match (run.status(), run.final_keys()) {
        (Status::Success, Some((bob, alice))) => bob.hamming_distance(&alice).ok(),
        _ => None,
    };
    r.round_trips = Some(run.round_trips());
    r
}

/// One seeded end-to-end run: key generation, noise, reconciliation and
/// the residual audit. With `timed`, fills the time and throughput columns
/// from the reconciliation alone.
pub fn run_trial(
    params: &SessionParams,
    key_length: usize,
    seed_noise: u64,
    segment: usize,
    parallel: usize,
    timed: bool,
) -> anyhow::Result<ExperimentRecord> {
    let (alice, bob) = key_pair(key_length, params.error_rate, seed_noise)?;
    let start = Instant::now();
    let run = reconcile_parallel(params, &alice, &bob, segment, parallel)?;
    let secs = start.elapsed().as_secs_f64();
    let mut r = record_run(params, key_length, seed_noise, segment, &run);
    if timed {
        r.time_ms = Some(secs * 1e3);
        r.throughput_bps = Some(key_length as f64 / secs);
    }
    Ok(r)
}

/// Runs `jobs` on up to `workers` threads and returns results in job order.
fn parallel_map<T, F>(jobs: usize, workers: usize, f: F) -> anyhow::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> anyhow::Result<T> + Sync,
{
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(jobs));
    thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let r = f(i);
                results.lock().expect("result lock").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("result lock");
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, r)| r).collect()
}

/// `trials` untimed runs per grid point; noise seeds are
/// `base_seed + trial`, shared across the grid. Rows are ordered by grid
/// point, then trial, whatever the worker count.
pub fn sweep_efficiency(
    params: &SessionParams,
    key_length: usize,
    grid: &[f64],
    trials: usize,
    base_seed: u64,
    workers: usize,
) -> anyhow::Result<Vec<ExperimentRecord>> {
    parallel_map(grid.len() * trials, workers, |i| {
        let mut p = params.clone();
        p.error_rate = grid[i / trials];
        run_trial(&p, key_length, base_seed.wrapping_add((i % trials) as u64), DEFAULT_SEGMENT, 1, false)
    })
}

/// Timed runs of a [`TIME_KEY_LENGTH`]-bit key cut into `parallel`-way
/// concurrent 64 Kbit sessions over the in-process channel.
pub fn sweep_time(
    params: &SessionParams,
    grid: &[f64],
    trials: usize,
    base_seed: u64,
    parallel: usize,
) -> anyhow::Result<Vec<ExperimentRecord>> {
    let mut out = Vec::with_capacity(grid.len() * trials);
    for &p in grid {
        let mut params = params.clone();
        params.error_rate = p;
        for t in 0..trials {
            out.push(run_trial(
                &params,
                TIME_KEY_LENGTH,
                base_seed.wrapping_add(t as u64),
                DEFAULT_SEGMENT,
                parallel,
                true,
            )?);
        }
    }
    Ok(out)
}

/// Mean of `f` per distinct `p_true`, in first-seen order. Rows without
/// `f` are skipped.
pub fn mean_f(records: &[ExperimentRecord]) -> Vec<(f64, f64)> {
    let mut acc: Vec<(f64, f64, usize)> = Vec::new();
    for r in records {
        let (Some(p), Some(f)) = (r.p_true, r.f) else { continue };
        match acc.iter_mut().find(|(q, _, _)| *q == p) {
            Some(e) => {
                e.1 += f;
                e.2 += 1;
            }
            None => acc.push((p, f, 1)),
        }
    }
    acc.into_iter().map(|(p, s, n)| (p, s / n as f64)).collect()
}

fn perm_record(
    label: String,
    key_length: usize,
    seed1: u64,
    seed2: Option<u64>,
    d_tot: f64,
) -> ExperimentRecord {
    let mut r = ExperimentRecord::blank(label, key_length, seed1);
    r.seed2 = seed2;
    r.d_tot = Some(d_tot);
    r
}

/// Separation of the two-register permutation for blocks of `n` bits.
pub fn two_lfsr_d_tot(key_length: usize, n: usize, seed1: u64, seed2: u64) -> anyhow::Result<ExperimentRecord> {
    let plan = two_lfsr_permutation(seed1, seed2, key_length)?;
    let d = separation_score(&plan, n, n, false)?.d_tot;
    Ok(perm_record(format!("perm-2lfsr/n={n}"), key_length, seed1, Some(seed2), d))
}

pub fn one_lfsr_d_tot(key_length: usize, n: usize, seed: u64) -> anyhow::Result<ExperimentRecord> {
    let plan = one_lfsr_permutation(seed, key_length)?;
    let d = separation_score(&plan, n, n, false)?.d_tot;
    Ok(perm_record(format!("perm-1lfsr/n={n}"), key_length, seed, None, d))
}

/// `count` second seeds spread evenly over `[1, key_length)`.
pub fn sweep_seeds(key_length: usize, count: usize) -> Vec<u64> {
    let step = ((key_length - 1) / count.max(1)).max(1) as u64;
    (0..count as u64).map(|k| 1 + k * step).filter(|&s| s < key_length as u64).collect()
}

pub fn permtest_seeds(
    key_length: usize,
    n: usize,
    seed1: u64,
    seeds2: &[u64],
    workers: usize,
) -> anyhow::Result<Vec<ExperimentRecord>> {
    parallel_map(seeds2.len(), workers, |i| two_lfsr_d_tot(key_length, n, seed1, seeds2[i]))
}

pub fn permtest_blocks(
    key_length: usize,
    seed1: u64,
    seed2: u64,
    blocks: &[usize],
) -> anyhow::Result<Vec<ExperimentRecord>> {
    blocks.iter().map(|&n| two_lfsr_d_tot(key_length, n, seed1, seed2)).collect()
}

/// Reruns a row from its recorded seeds. Timing columns are recomputed
/// only for rows that had them.
pub fn replay(record: &ExperimentRecord) -> anyhow::Result<ExperimentRecord> {
    let (base, opts) = parse_label(&record.protocol)?;
    let opt = |k: &str| opts.iter().find(|(name, _)| *name == k).map(|(_, v)| *v);
    match base {
        "perm-2lfsr" | "perm-1lfsr" => {
            let n = opt("n").ok_or_else(|| anyhow!("perm label without n"))?;
            if base == "perm-2lfsr" {
                let seed2 = record.seed2.ok_or_else(|| anyhow!("missing seed2"))?;
                two_lfsr_d_tot(record.key_length, n, record.seed1, seed2)
            } else {
                one_lfsr_d_tot(record.key_length, n, record.seed1)
            }
        }
        _ => {
            let protocol: Protocol = base.parse().map_err(|e: String| anyhow!(e))?;
            let p = record.p_true.ok_or_else(|| anyhow!("missing p_true"))?;
            let mut params = SessionParams::new(protocol, p, record.seed1, record.seed2.unwrap_or(0));
            params.crc_retries = opt("retries").unwrap_or(0) as u32;
            let segment = opt("segment").unwrap_or(DEFAULT_SEGMENT);
            let seed_noise = record.seed_noise.ok_or_else(|| anyhow!("missing seed_noise"))?;
            let timed = record.time_ms.is_some();
            run_trial(&params, record.key_length, seed_noise, segment, 1, timed)
        }
    }
}
