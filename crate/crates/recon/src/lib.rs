//! Two-party QKD error reconciliation, std side.
//!
//! * [`transport`]: in-process and TCP framed channels with counters,
//!   latency injection and transcripts.
//! * [`noise`]: seeded keys and binary-symmetric noise.
//! * [`session`]: protocol selection, key segmentation and parallel
//!   in-process sessions.
//! * [`harness`]: seeded experiments, sweeps and their CSV records.
//! * [`config`]: run settings and the `key=value` config file.
//!
//! The protocol logic itself lives in `qkdrecon-core`.

pub mod config;
pub mod harness;
pub mod noise;
pub mod session;
pub mod transport;

pub use qkdrecon_core as core;
