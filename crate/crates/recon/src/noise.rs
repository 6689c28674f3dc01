//! Seeded keys and channel noise.
//!
//! Both come from ChaCha8 keyed by one 64-bit seed: stream 0 draws the key,
//! stream 1 draws the flips, so a record's `seed_noise` alone reproduces
//! both parties' inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkdrecon_core::{BitString, Error, KeyString, Result};

/// Generator recorded alongside every seed.
pub const NOISE_GENERATOR: &str = "chacha8";

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniformly random key of `len` bits.
pub fn random_key(len: usize, seed: u64) -> Result<KeyString> {
    let mut rng = stream(seed, 0);
    let words = (0..len.div_ceil(64)).map(|_| rng.random()).collect();
    BitString::from_words(words, len)
}

/// Flips every bit independently with probability `p`. Returns the noisy
/// copy and the flipped positions.
pub fn inject_errors(key: &KeyString, p: f64, seed: u64) -> Result<(KeyString, Vec<usize>)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("flip probability {p} outside [0, 1]")));
    }
    let mut rng = stream(seed, 1);
    let mut out = key.clone();
    let mut flips = Vec::new();
    for i in 0..key.len() {
        if rng.random_bool(p) {
            out.flip(i)?;
            flips.push(i);
        }
    }
    Ok((out, flips))
}

/// Alice's key and Bob's noisy copy for one seeded trial.
pub fn key_pair(len: usize, p: f64, seed: u64) -> Result<(KeyString, KeyString)> {
    let alice = random_key(len, seed)?;
    let (bob, _) = inject_errors(&alice, p, seed)?;
    Ok((alice, bob))
}
