//! Error reconciliation for discrete-variable QKD post-processing.
//!
//! This crate is `no_std` (it needs `alloc`) and holds everything that does
//! not touch the operating system:
//!
//! * [`bits`]: packed key strings, parities, block partitions.
//! * [`crc`]: the CRC-64 digest used for the final verdict.
//! * [`lfsr`] and [`permute`]: maximal-length LFSR position streams, the
//!   one- and two-register pair-swap permutations, and the separation metric.
//! * [`hamming`]: on-the-fly parity-check matrix, syndromes and single-error
//!   decoding for power-of-two blocks.
//! * [`protocol`]: the pass-doubling Hamming reconciliation protocol as a
//!   driver (Bob) and a responder (Alice), with leak accounting.
//! * [`cascade`]: BINARY bisection and Cascade with backtracking.
//! * [`wire`] and [`channel`]: the framed message catalog and the channel
//!   abstraction both parties talk through.
//!
//! IO-bound transports, the experiment harness and the CLI live in the
//! `qkdrecon` crate.

#![no_std]
#![allow(clippy::len_without_is_empty)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bits;
pub mod cascade;
pub mod channel;
pub mod crc;
mod error;
pub mod hamming;
pub mod ledger;
pub mod lfsr;
pub mod permute;
pub mod protocol;
pub mod wire;

pub use bits::{BitString, BlockPartition, KeyString};
pub use channel::{Channel, ChannelError, ChannelStats, DirectChannel, Responder};
pub use error::Error;
pub use ledger::{efficiency, shannon_h, LeakLedger};
pub use lfsr::LfsrSpec;
pub use permute::{PermutationPlan, SeparationReport};
pub use protocol::{
    reconcile, simulate, AbortReason, ReconOutcome, Role, SessionConfig, Simulation, Status,
};

pub type Result<T, E = Error> = core::result::Result<T, E>;
