use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use qkdrecon::config::Settings;
use qkdrecon::harness::{
    self, mean_f, record_outcomes, status_label, write_csv, ExperimentRecord, BLOCK_SWEEP,
    EFFICIENCY_GRID, TIME_GRID,
};
use qkdrecon::noise::{key_pair, random_key};
use qkdrecon::session::{drive_segments, exit_code, join, serve_segments, Protocol};
use qkdrecon::transport::{self, memory_pair, Endpoint, FrameLink, DEFAULT_CAPACITY};
use qkdrecon_core::{AbortReason, ChannelError, Status};

const EXIT_CHANNEL: u8 = 3;
const EXIT_CONFIG: u8 = 4;

/// Hamming/LFSR error reconciliation for QKD keys, with a Cascade baseline.
#[derive(Parser, Debug)]
#[command(name = "qkdrecon", version)]
struct Cli {
    /// key=value settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write records here instead of stdout.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Noise seed, or the base seed of a sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Delay added before every outgoing frame.
    #[arg(long = "latency-ms", global = true)]
    latency_ms: Option<u64>,
    /// hamming-lfsr or cascade.
    #[arg(long, global = true)]
    protocol: Option<Protocol>,
    #[arg(short = 'n', long = "key-length", global = true)]
    key_length: Option<usize>,
    #[arg(short = 'p', long = "error-rate", global = true)]
    error_rate: Option<f64>,
    #[arg(long, global = true)]
    seed1: Option<u64>,
    #[arg(long, global = true)]
    seed2: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Comma-separated error rates.
    #[arg(long, global = true, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Concurrent sessions (segments or sweep trials).
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Segment length in bits.
    #[arg(long, global = true)]
    segment: Option<usize>,
    #[arg(long = "crc-retries", global = true)]
    crc_retries: Option<u32>,
    /// Drop as many final key bits as were disclosed.
    #[arg(long = "discard-leaked", global = true)]
    discard_leaked: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One seeded end-to-end run.
    Simulate,
    /// Efficiency over an error-rate grid.
    SweepF,
    /// Time and throughput of a 512 Kbit key in parallel segments.
    SweepT,
    /// Separation of the LFSR permutations.
    Permtest {
        #[arg(long, value_enum, default_value_t = PermMode::Seeds)]
        mode: PermMode,
        #[arg(long = "block-length")]
        block_length: Option<usize>,
        #[arg(long = "seed-count")]
        seed_count: Option<usize>,
    },
    /// Alice: accept one TCP peer and answer its sessions.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Bob: connect to a serving peer and reconcile.
    Connect {
        #[arg(long)]
        peer: Option<String>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PermMode {
    /// Fixed first seed, swept second seed.
    Seeds,
    /// Fixed seeds, swept block length.
    Blocks,
    /// Single-register scheme next to the two-register one.
    OneLfsr,
}

enum Failure {
    Config(String),
    Channel(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if e.downcast_ref::<qkdrecon_core::Error>().is_some() {
            Failure::Config(format!("{e:#}"))
        } else if e.downcast_ref::<ChannelError>().is_some() || e.downcast_ref::<io::Error>().is_some() {
            Failure::Channel(format!("{e:#}"))
        } else {
            Failure::Other(e)
        }
    }
}

impl From<qkdrecon_core::Error> for Failure {
    fn from(e: qkdrecon_core::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn settings(cli: &Cli) -> Result<Settings, Failure> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        s.apply_file(path).map_err(|e| Failure::Config(e.to_string()))?;
    }
    macro_rules! take {
        ($($field:ident),*) => {$(
            if let Some(v) = cli.$field.clone() {
                s.$field = v;
            }
        )*};
    }
    take!(seed, latency_ms, protocol, key_length, error_rate, seed1, seed2, trials, parallel, segment, crc_retries);
    if cli.csv.is_some() {
        s.csv = cli.csv.clone();
    }
    if cli.grid.is_some() {
        s.grid = cli.grid.clone();
    }
    s.discard_leaked |= cli.discard_leaked;
    if s.segment == 0 || s.parallel == 0 || s.key_length == 0 {
        return Err(Failure::Config("key_length, segment and parallel must be positive".into()));
    }
    Ok(s)
}

fn emit(settings: &Settings, records: &[ExperimentRecord]) -> anyhow::Result<()> {
    match &settings.csv {
        Some(path) => write_csv(records, File::create(path)?),
        None => write_csv(records, io::stdout().lock()),
    }
}

fn print_outcome(r: &ExperimentRecord, out: &mut impl Write) -> io::Result<()> {
    let l = r.ledger.unwrap_or_default();
    writeln!(out, "protocol      {}", r.protocol)?;
    writeln!(out, "N             {}", r.key_length)?;
    writeln!(out, "p             {}", r.p_true.unwrap_or_default())?;
    writeln!(out, "status        {}", r.status.map(status_label).unwrap_or_default())?;
    writeln!(out, "passes        {}", r.passes.unwrap_or_default())?;
    writeln!(
        out,
        "leaked        {} (parity {}, syndrome {}, crc {})",
        l.total(),
        l.parity_bits,
        l.syndrome_bits,
        l.crc_bits
    )?;
    if let Some(f) = r.f {
        writeln!(out, "f             {f:.4}")?;
    }
    if let Some(rt) = r.round_trips {
        writeln!(out, "round trips   {rt}")?;
    }
    if let Some(res) = r.residual_errors {
        writeln!(out, "residual      {res}")?;
    }
    if let Some(t) = r.time_ms {
        writeln!(out, "time          {t:.3} ms")?;
    }
    Ok(())
}

fn finish(settings: &Settings, record: ExperimentRecord) -> Result<u8, Failure> {
    print_outcome(&record, &mut io::stdout().lock()).map_err(anyhow::Error::from)?;
    if settings.csv.is_some() {
        emit(settings, std::slice::from_ref(&record))?;
    }
    Ok(exit_code(record.status.unwrap_or(Status::Abandoned(AbortReason::Channel))) as u8)
}

fn simulate(s: &Settings) -> Result<u8, Failure> {
    let params = s.session_params();
    if s.latency_ms == 0 {
        let r = harness::run_trial(&params, s.key_length, s.seed, s.segment, s.parallel, true)?;
        return finish(s, r);
    }
    let (alice, bob) = key_pair(s.key_length, s.error_rate, s.seed)?;
    let latency = Duration::from_millis(s.latency_ms);
    let (a_end, b_end) = memory_pair(DEFAULT_CAPACITY);
    let (mut a_end, mut b_end) = (a_end.with_latency(latency), b_end.with_latency(latency));
    let start = Instant::now();
    let (alice_out, bob_out) = thread::scope(|scope| {
        let served = scope.spawn(|| serve_segments(&params, &alice, s.segment, &mut a_end));
        let driven = drive_segments(&params, &bob, s.segment, &mut b_end);
        (served.join().expect("alice thread panicked"), driven)
    });
    let secs = start.elapsed().as_secs_f64();
    let (alice_out, bob_out) = (alice_out?, bob_out?);
    let mut r = record_outcomes(&params, s.key_length, s.seed, s.segment, &bob_out);
    if r.status == Some(Status::Success) {
        let a: Option<Vec<_>> = alice_out.iter().map(|o| o.final_key.clone()).collect();
        let b: Option<Vec<_>> = bob_out.iter().map(|o| o.final_key.clone()).collect();
        if let (Some(a), Some(b)) = (a, b) {
            let (a, b) = (join(&a)?, join(&b)?);
            r.residual_errors = a.hamming_distance(&b).ok();
        }
    }
    r.time_ms = Some(secs * 1e3);
    r.throughput_bps = Some(s.key_length as f64 / secs);
    finish(s, r)
}

fn sweep_f(s: &Settings) -> Result<u8, Failure> {
    let grid = s.grid.clone().unwrap_or_else(|| EFFICIENCY_GRID.to_vec());
    let records = harness::sweep_efficiency(&s.session_params(), s.key_length, &grid, s.trials, s.seed, s.parallel)?;
    for (p, f) in mean_f(&records) {
        info!("p={p} mean f={f:.4}");
    }
    emit(s, &records)?;
    Ok(0)
}

fn sweep_t(s: &Settings) -> Result<u8, Failure> {
    let grid = s.grid.clone().unwrap_or_else(|| TIME_GRID.to_vec());
    let records = harness::sweep_time(&s.session_params(), &grid, s.trials, s.seed, s.parallel)?;
    emit(s, &records)?;
    Ok(0)
}

fn permtest(s: &Settings, mode: PermMode, block: Option<usize>, count: Option<usize>) -> Result<u8, Failure> {
    let n = block.unwrap_or(s.block_length);
    let records = match mode {
        PermMode::Seeds => {
            let seeds = harness::sweep_seeds(s.key_length, count.unwrap_or(s.seed_count));
            harness::permtest_seeds(s.key_length, n, s.seed1, &seeds, s.parallel)?
        }
        PermMode::Blocks => {
            let blocks: Vec<usize> = BLOCK_SWEEP.iter().copied().filter(|&b| b <= s.key_length).collect();
            harness::permtest_blocks(s.key_length, s.seed1, s.seed2, &blocks)?
        }
        PermMode::OneLfsr => vec![
            harness::one_lfsr_d_tot(s.key_length, n, s.seed1)?,
            harness::two_lfsr_d_tot(s.key_length, n, s.seed1, s.seed2)?,
        ],
    };
    emit(s, &records)?;
    Ok(0)
}

fn linked_status<L: FrameLink>(
    s: &Settings,
    endpoint: Endpoint<L>,
    alice_side: bool,
) -> Result<u8, Failure> {
    let params = s.session_params();
    let mut endpoint = endpoint.with_latency(Duration::from_millis(s.latency_ms));
    let outcomes = if alice_side {
        let key = random_key(s.key_length, s.seed)?;
        serve_segments(&params, &key, s.segment, &mut endpoint)?
    } else {
        let (_, key) = key_pair(s.key_length, s.error_rate, s.seed)?;
        drive_segments(&params, &key, s.segment, &mut endpoint)?
    };
    let mut r = record_outcomes(&params, s.key_length, s.seed, s.segment, &outcomes);
    r.time_ms = Some(outcomes.iter().map(|o| o.wall_time.as_secs_f64() * 1e3).sum());
    finish(s, r)
}

fn serve(s: &Settings, listen: Option<String>) -> Result<u8, Failure> {
    let addr = listen
        .or_else(|| s.listen.clone())
        .ok_or_else(|| Failure::Config("serve needs --listen HOST:PORT".into()))?;
    let listener = transport::listen(&addr).map_err(|e| Failure::Channel(format!("listen {addr}: {e}")))?;
    info!("listening on {addr}");
    let endpoint = transport::accept(&listener).map_err(|e| Failure::Channel(format!("accept: {e}")))?;
    linked_status(s, endpoint, true)
}

fn connect(s: &Settings, peer: Option<String>) -> Result<u8, Failure> {
    let addr = peer
        .or_else(|| s.peer.clone())
        .ok_or_else(|| Failure::Config("connect needs --peer HOST:PORT".into()))?;
    let endpoint = transport::connect(&addr).map_err(|e| Failure::Channel(format!("connect {addr}: {e}")))?;
    linked_status(s, endpoint, false)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let s = settings(&cli)?;
    match cli.command {
        Command::Simulate => simulate(&s),
        Command::SweepF => sweep_f(&s),
        Command::SweepT => sweep_t(&s),
        Command::Permtest {
            mode,
            block_length,
            seed_count,
        } => permtest(&s, mode, block_length, seed_count),
        Command::Serve { listen } => serve(&s, listen),
        Command::Connect { peer } => connect(&s, peer),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Channel(m)) => {
            eprintln!("channel error: {m}");
            ExitCode::from(EXIT_CHANNEL)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
