//! Hamming syndromes for power-of-two blocks.
//!
//! A block of `n = 2^r` bits is split into a codeword of the first `n - 1`
//! bits (columns `1..=2^r - 1` of the `r x (2^r - 1)` parity-check matrix)
//! and one trailing bit that only the overall block parity covers. The
//! matrix is never stored: column `j` is the binary representation of `j`.

use crate::bits::BitString;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HammingParams {
    r: u32,
}

impl HammingParams {
    pub fn new(r: u32) -> Result<Self> {
        if !(2..=31).contains(&r) {
            return Err(Error::InvalidArgument(alloc::format!(
                "Hamming row count {r} outside 2..=31"
            )));
        }
        Ok(Self { r })
    }

    pub fn for_block_length(n: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        Self::new(n.trailing_zeros())
    }

    pub fn rows(&self) -> u32 {
        self.r
    }

    pub fn codeword_span(&self) -> usize {
        (1usize << self.r) - 1
    }

    pub fn block_length(&self) -> usize {
        1usize << self.r
    }
}

/// Element `h[i][j]` (1-based row and column) of the parity-check matrix:
/// bit `i - 1` of `j`.
pub fn matrix_element(i: u32, j: usize, params: HammingParams) -> Result<bool> {
    if i == 0 || i > params.rows() {
        return Err(Error::IndexOutOfRange {
            index: i as usize,
            len: params.rows() as usize,
        });
    }
    if j == 0 || j > params.codeword_span() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: params.codeword_span(),
        });
    }
    Ok((j >> (i - 1)) & 1 == 1)
}

/// Syndrome of a standalone block: XOR of the 1-based positions of its set
/// bits, the last bit excluded.
pub fn syndrome(block: &BitString, params: HammingParams) -> Result<u32> {
    if block.len() != params.block_length() {
        return Err(Error::LengthMismatch {
            left: block.len(),
            right: params.block_length(),
        });
    }
    Ok(block_syndrome(block, 0, params))
}

/// Syndrome of the block of `params.block_length()` bits starting at
/// `start` inside `key`.
pub fn block_syndrome(key: &BitString, start: usize, params: HammingParams) -> u32 {
    let n = params.block_length();
    let words = key.words();
    let mut sigma = 0u32;
    if n >= 64 {
        // blocks are word aligned
        let first = start / 64;
        for (k, &w) in words[first..first + n / 64].iter().enumerate() {
            let mut rest = w;
            if k == n / 64 - 1 {
                rest &= !(1u64 << 63);
            }
            let base = (k * 64) as u32 + 1;
            while rest != 0 {
                sigma ^= base + rest.trailing_zeros();
                rest &= rest - 1;
            }
        }
    } else {
        let word = words[start / 64] >> (start % 64);
        let mut rest = word & ((1u64 << (n - 1)) - 1);
        while rest != 0 {
            sigma ^= rest.trailing_zeros() + 1;
            rest &= rest - 1;
        }
    }
    sigma
}

/// Block-local index to flip given `sigma_diff = σ_local ^ σ_remote` for a
/// block whose overall parities disagree. A zero difference puts the error
/// on the excluded last bit.
pub fn decode_flip(sigma_diff: u32, params: HammingParams) -> usize {
    if sigma_diff == 0 {
        params.block_length() - 1
    } else {
        sigma_diff as usize - 1
    }
}
