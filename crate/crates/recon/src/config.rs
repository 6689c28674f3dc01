//! Run settings and the `key=value` config file.
//!
//! ```text
//! # comment
//! protocol = hamming-lfsr
//! key_length = 65536
//! error_rate = 0.03
//! grid = 0.01, 0.02, 0.03
//! ```
//!
//! Unknown keys and unparsable values are errors; a later line overrides an
//! earlier one.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::session::{Protocol, SessionParams, DEFAULT_PARALLEL, DEFAULT_SEGMENT};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value}")]
    BadValue { line: usize, key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub protocol: Protocol,
    pub key_length: usize,
    pub error_rate: f64,
    /// Noise seed; also the base seed of sweeps.
    pub seed: u64,
    pub seed1: u64,
    pub seed2: u64,
    pub trials: usize,
    pub grid: Option<Vec<f64>>,
    pub parallel: usize,
    pub segment: usize,
    pub latency_ms: u64,
    pub crc_retries: u32,
    pub discard_leaked: bool,
    pub block_length: usize,
    pub seed_count: usize,
    pub csv: Option<PathBuf>,
    pub listen: Option<String>,
    pub peer: Option<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            protocol: Protocol::Hamming,
            key_length: DEFAULT_SEGMENT,
            error_rate: 0.05,
            seed: 1,
            seed1: 5,
            seed2: 78,
            trials: 50,
            grid: None,
            parallel: DEFAULT_PARALLEL,
            segment: DEFAULT_SEGMENT,
            latency_ms: 0,
            crc_retries: 0,
            discard_leaked: false,
            block_length: 16,
            seed_count: 1000,
            csv: None,
            listen: None,
            peer: None,
        }
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: raw.to_string(),
    })
}

pub fn parse_grid(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad grid entry `{}`", s.trim())))
        .collect()
}

impl Settings {
    /// Applies every `key=value` line of `text` on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, val) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, val) = (key.trim(), val.trim());
            match key {
                "protocol" => self.protocol = value(line, key, val)?,
                "key_length" | "N" => self.key_length = value(line, key, val)?,
                "error_rate" | "p" => self.error_rate = value(line, key, val)?,
                "seed" => self.seed = value(line, key, val)?,
                "seed1" => self.seed1 = value(line, key, val)?,
                "seed2" => self.seed2 = value(line, key, val)?,
                "trials" => self.trials = value(line, key, val)?,
                "grid" => {
                    self.grid = Some(parse_grid(val).map_err(|_| ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        value: val.to_string(),
                    })?)
                }
                "parallel" => self.parallel = value(line, key, val)?,
                "segment" => self.segment = value(line, key, val)?,
                "latency_ms" => self.latency_ms = value(line, key, val)?,
                "crc_retries" => self.crc_retries = value(line, key, val)?,
                "discard_leaked" => self.discard_leaked = value(line, key, val)?,
                "block_length" => self.block_length = value(line, key, val)?,
                "seed_count" => self.seed_count = value(line, key, val)?,
                "csv" => self.csv = Some(PathBuf::from(val)),
                "listen" => self.listen = Some(val.to_string()),
                "peer" => self.peer = Some(val.to_string()),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_str(&text)
    }

    pub fn session_params(&self) -> SessionParams {
        let mut p = SessionParams::new(self.protocol, self.error_rate, self.seed1, self.seed2);
        p.crc_retries = self.crc_retries;
        p.discard_leaked = self.discard_leaked;
        p
    }
}
