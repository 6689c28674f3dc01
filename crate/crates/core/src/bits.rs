//! Packed bit strings.
//!
//! Bit `i` lives in word `i / 64` at bit position `i % 64`. Storage past the
//! last bit is always zero so that word-level popcounts and digests never see
//! stale padding.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::{Error, Result};

const WORD_BITS: usize = 64;

/// A packed, non-empty sequence of bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

/// The sifted key held by one party.
pub type KeyString = BitString;

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

impl BitString {
    /// All-zero string of `len` bits.
    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptySegment);
        }
        Ok(Self {
            words: vec![0; words_for(len)],
            len,
        })
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut out = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        Ok(out)
    }

    /// Parses a string of `'0'`/`'1'` characters, index 0 first.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(alloc::format!(
                    "unexpected character {other:?} in bit string"
                ))),
            })
            .collect::<Result<_>>()?;
        Self::from_bools(&bits)
    }

    /// Builds a string from packed words; bits past `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptySegment);
        }
        words.resize(words_for(len), 0);
        let mut out = Self { words, len };
        out.clear_padding();
        Ok(out)
    }

    /// Octets in ascending index order, lowest index in the least
    /// significant bit of each octet.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::LengthMismatch {
                left: len,
                right: bytes.len() * 8,
            });
        }
        let mut words = vec![0u64; words_for(len.max(1))];
        for (i, &b) in bytes.iter().take(len.div_ceil(8)).enumerate() {
            words[i / 8] |= (b as u64) << ((i % 8) * 8);
        }
        Self::from_words(words, len)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(n)
            .collect()
    }

    fn clear_padding(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn check(&self, index: usize) -> Result<()> {
        if index < self.len {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                len: self.len,
            })
        }
    }

    pub fn get(&self, index: usize) -> Result<bool> {
        self.check(index)?;
        Ok(self.bit(index))
    }

    /// Unchecked-by-contract read; panics past the word storage.
    #[inline]
    pub fn bit(&self, index: usize) -> bool {
        debug_assert!(index < self.len);
        (self.words[index / WORD_BITS] >> (index % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: bool) {
        debug_assert!(index < self.len);
        let mask = 1u64 << (index % WORD_BITS);
        let w = &mut self.words[index / WORD_BITS];
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    /// Inverts the bit at `index` in place.
    pub fn flip(&mut self, index: usize) -> Result<()> {
        self.check(index)?;
        self.words[index / WORD_BITS] ^= 1 << (index % WORD_BITS);
        Ok(())
    }

    /// Copy of `self` with the bit at `index` inverted.
    pub fn flipped(&self, index: usize) -> Result<Self> {
        let mut out = self.clone();
        out.flip(index)?;
        Ok(out)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            core::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD_BITS + tz)
            })
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    /// Bitwise XOR of two equal-length strings (the error pattern when
    /// applied to two parties' keys).
    pub fn xor(&self, other: &Self) -> Result<Self> {
        self.same_len(other)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(Self {
            words,
            len: self.len,
        })
    }

    fn same_len(&self, other: &Self) -> Result<()> {
        if self.len == other.len {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            })
        }
    }

    /// Number of positions where `self` and `other` differ.
    pub fn hamming_distance(&self, other: &Self) -> Result<usize> {
        self.same_len(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// XOR of the bits in `range`.
    pub fn range_parity(&self, range: Range<usize>) -> Result<bool> {
        if range.start >= range.end {
            return Err(Error::EmptySegment);
        }
        if range.end > self.len {
            return Err(Error::IndexOutOfRange {
                index: range.end - 1,
                len: self.len,
            });
        }
        Ok(self.range_parity_unchecked(range.start, range.end))
    }

    pub(crate) fn range_parity_unchecked(&self, start: usize, end: usize) -> bool {
        let (sw, sb) = (start / WORD_BITS, start % WORD_BITS);
        let (ew, eb) = (end / WORD_BITS, end % WORD_BITS);
        let acc = if sw == ew {
            (self.words[sw] >> sb) & ((1u64 << (eb - sb)) - 1)
        } else {
            let mut acc = self.words[sw] >> sb;
            for w in &self.words[sw + 1..ew] {
                acc ^= w;
            }
            if eb != 0 {
                acc ^= self.words[ew] & ((1u64 << eb) - 1);
            }
            acc
        };
        acc.count_ones() & 1 == 1
    }

    /// Parity of every block of `block_length` bits, the trailing partial
    /// block included.
    pub fn block_parities(&self, block_length: usize) -> Result<BitString> {
        let part = BlockPartition::new(self.len, block_length)?;
        let count = part.block_count();
        let mut out = BitString::zeros(count)?;
        if block_length <= WORD_BITS && WORD_BITS % block_length == 0 {
            // Fold each word so that bit g*n holds the parity of group g.
            let per_word = WORD_BITS / block_length;
            for (wi, &w) in self.words.iter().enumerate() {
                let mut x = w;
                let mut shift = 1;
                while shift < block_length {
                    x ^= x >> shift;
                    shift <<= 1;
                }
                for g in 0..per_word {
                    let j = wi * per_word + g;
                    if j >= count {
                        break;
                    }
                    if (x >> (g * block_length)) & 1 == 1 {
                        out.words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
                    }
                }
            }
        } else if block_length % WORD_BITS == 0 {
            let per_block = block_length / WORD_BITS;
            for (j, chunk) in self.words.chunks(per_block).enumerate() {
                let acc = chunk.iter().fold(0u64, |a, w| a ^ w);
                if acc.count_ones() & 1 == 1 {
                    out.words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
                }
            }
        } else {
            for j in 0..count {
                let r = part.block_range(j);
                if self.range_parity_unchecked(r.start, r.end) {
                    out.words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
                }
            }
        }
        Ok(out)
    }

    /// Copy with the (distinct) `positions` removed, order of the remaining
    /// bits preserved.
    pub fn without_positions(&self, positions: &[usize]) -> Result<Self> {
        let mut drop = vec![false; self.len];
        for &p in positions {
            self.check(p)?;
            drop[p] = true;
        }
        let kept: Vec<bool> = (0..self.len).filter(|&i| !drop[i]).map(|i| self.bit(i)).collect();
        Self::from_bools(&kept)
    }

    /// Keeps the first `len` bits.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len > self.len {
            return Err(Error::LengthMismatch {
                left: len,
                right: self.len,
            });
        }
        Self::from_words(self.words[..words_for(len)].to_vec(), len)
    }

    /// Copy of the bits in `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len {
            return Err(Error::IndexOutOfRange {
                index: range.end,
                len: self.len,
            });
        }
        let (first, shift) = (range.start / WORD_BITS, range.start % WORD_BITS);
        let words = (0..words_for(range.len()))
            .map(|k| {
                let lo = self.words[first + k] >> shift;
                let hi = match (shift, self.words.get(first + k + 1)) {
                    (0, _) | (_, None) => 0,
                    (_, Some(&w)) => w << (WORD_BITS - shift),
                };
                lo | hi
            })
            .collect();
        Self::from_words(words, range.len())
    }

    /// Concatenation of `parts` in order.
    pub fn concat(parts: &[BitString]) -> Result<Self> {
        let len = parts.iter().map(|p| p.len).sum();
        let mut out = Self::zeros(len)?;
        let mut at = 0;
        for part in parts {
            let shift = at % WORD_BITS;
            for (k, &w) in part.words.iter().enumerate() {
                let i = at / WORD_BITS + k;
                out.words[i] |= w << shift;
                if shift != 0 && i + 1 < out.words.len() {
                    out.words[i + 1] |= w >> (WORD_BITS - shift);
                }
            }
            at += part.len;
        }
        Ok(out)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString[{}](", self.len)?;
        if self.len <= 128 {
            for b in self.iter() {
                f.write_str(if b { "1" } else { "0" })?;
            }
        } else {
            write!(f, "{} ones", self.count_ones())?;
        }
        f.write_str(")")
    }
}

/// XOR-reduction of a bit sequence.
pub fn parity(segment: &[bool]) -> Result<bool> {
    if segment.is_empty() {
        return Err(Error::EmptySegment);
    }
    Ok(segment.iter().fold(false, |acc, &b| acc ^ b))
}

/// Partition of `[0, len)` into consecutive blocks of `block_length` bits;
/// the last block may be shorter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPartition {
    len: usize,
    block_length: usize,
}

impl BlockPartition {
    pub fn new(len: usize, block_length: usize) -> Result<Self> {
        if block_length == 0 || block_length > len {
            return Err(Error::InvalidBlockLength {
                block: block_length,
                len,
            });
        }
        Ok(Self { len, block_length })
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn block_count(&self) -> usize {
        self.len.div_ceil(self.block_length)
    }

    pub fn block_range(&self, j: usize) -> Range<usize> {
        let start = j * self.block_length;
        start..(start + self.block_length).min(self.len)
    }

    pub fn block_of(&self, index: usize) -> usize {
        index / self.block_length
    }

    /// Whether block `j` is shorter than the nominal block length.
    pub fn is_partial(&self, j: usize) -> bool {
        self.block_range(j).len() != self.block_length
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_and_concat_round_trip() {
        let bits: Vec<bool> = (0..1000).map(|i| (i * 37) % 11 < 4).collect();
        let key = BitString::from_bools(&bits).unwrap();
        for cuts in [[0, 64, 1000], [0, 333, 1000], [0, 1, 1000], [0, 999, 1000]] {
            let parts: Vec<BitString> = cuts
                .windows(2)
                .map(|w| key.slice(w[0]..w[1]).unwrap())
                .collect();
            for (w, part) in cuts.windows(2).zip(&parts) {
                assert_eq!(part, &BitString::from_bools(&bits[w[0]..w[1]]).unwrap());
            }
            assert_eq!(BitString::concat(&parts).unwrap(), key);
        }
        assert!(key.slice(5..5).is_err());
        assert!(key.slice(0..1001).is_err());
    }
    use proptest::prelude::*;
    use std::vec::Vec;

    fn naive_parities(bits: &[bool], n: usize) -> Vec<bool> {
        bits.chunks(n)
            .map(|c| c.iter().filter(|&&b| b).count() % 2 == 1)
            .collect()
    }

    #[test]
    fn parity_examples() {
        assert!(!parity(&[false; 4]).unwrap());
        assert!(parity(&[true, false, true, true]).unwrap());
        assert!(parity(&[true; 7]).unwrap());
        assert_eq!(parity(&[]), Err(Error::EmptySegment));
    }

    #[test]
    fn block_parity_examples() {
        let k = BitString::from_bit_str("00000000").unwrap();
        let p = k.block_parities(4).unwrap();
        assert_eq!(p, BitString::from_bit_str("00").unwrap());
        let k = BitString::from_bit_str("10000001").unwrap();
        assert_eq!(k.block_parities(4).unwrap(), BitString::from_bit_str("11").unwrap());
        assert!(k.block_parities(0).is_err());
        assert!(k.block_parities(9).is_err());
    }

    #[test]
    fn random_64_bit_key_parities_match_recount() {
        let raw = 0x9e37_79b9_7f4a_7c15u64;
        let bits: Vec<bool> = (0..64).map(|i| (raw >> i) & 1 == 1).collect();
        let k = BitString::from_words(std::vec![raw], 64).unwrap();
        let got: Vec<bool> = k.block_parities(8).unwrap().iter().collect();
        assert_eq!(got, naive_parities(&bits, 8));
    }

    #[test]
    fn flip_and_distance() {
        let k = BitString::from_bit_str("0000").unwrap();
        let f = k.flipped(2).unwrap();
        assert_eq!(f, BitString::from_bit_str("0010").unwrap());
        assert_eq!(f.flipped(2).unwrap(), k);
        assert_eq!(k.hamming_distance(&f).unwrap(), 1);
        assert!(k.flipped(4).is_err());
        let ones = BitString::from_bit_str("1111").unwrap();
        assert_eq!(k.hamming_distance(&ones).unwrap(), 4);
        assert_eq!(k.hamming_distance(&k).unwrap(), 0);
        let short = BitString::from_bit_str("111").unwrap();
        assert!(k.hamming_distance(&short).is_err());
    }

    #[test]
    fn zero_length_rejected() {
        assert!(BitString::zeros(0).is_err());
        assert!(BitString::from_bools(&[]).is_err());
    }

    #[test]
    fn bytes_are_lsb_first() {
        let k = BitString::from_bit_str("1000000001").unwrap();
        assert_eq!(k.to_bytes(), std::vec![0x01, 0x02]);
        assert_eq!(BitString::from_bytes(&[0x01, 0x02], 10).unwrap(), k);
        // padding bits in the source are dropped
        assert_eq!(BitString::from_bytes(&[0x01, 0xFE], 10).unwrap(), k);
    }

    #[test]
    fn partition_covers_with_partial_tail() {
        let p = BlockPartition::new(10, 4).unwrap();
        assert_eq!(p.block_count(), 3);
        assert_eq!(p.block_range(2), 8..10);
        assert!(p.is_partial(2));
        assert!(!p.is_partial(1));
    }

    fn arb_bits() -> impl Strategy<Value = Vec<bool>> {
        prop::collection::vec(any::<bool>(), 1..600)
    }

    proptest! {
        #[test]
        fn packed_matches_naive(bits in arb_bits(), n in 1usize..200, a in 0usize..600, b in 0usize..600) {
            let k = BitString::from_bools(&bits).unwrap();
            prop_assert_eq!(k.count_ones(), bits.iter().filter(|&&x| x).count());
            let n = n.min(bits.len());
            let got: Vec<bool> = k.block_parities(n).unwrap().iter().collect();
            prop_assert_eq!(got, naive_parities(&bits, n));
            let (lo, hi) = (a.min(b) % bits.len(), (a.max(b) % bits.len()) + 1);
            if lo < hi {
                let naive = bits[lo..hi].iter().filter(|&&x| x).count() % 2 == 1;
                prop_assert_eq!(k.range_parity(lo..hi).unwrap(), naive);
            }
            let ones: Vec<usize> = k.iter_ones().collect();
            let naive_ones: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
            prop_assert_eq!(ones, naive_ones);
            prop_assert_eq!(BitString::from_bytes(&k.to_bytes(), k.len()).unwrap(), k);
        }

        #[test]
        fn parity_is_linear(a in prop::collection::vec(any::<bool>(), 1..300), seed in any::<u64>()) {
            let b: Vec<bool> = (0..a.len()).map(|i| (seed.rotate_left(i as u32) ^ i as u64) & 1 == 1).collect();
            let x: Vec<bool> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            prop_assert_eq!(parity(&x).unwrap(), parity(&a).unwrap() ^ parity(&b).unwrap());
        }

        #[test]
        fn flip_changes_only_its_block(bits in arb_bits(), n in 1usize..100, i in 0usize..600) {
            let k = BitString::from_bools(&bits).unwrap();
            let n = n.min(bits.len());
            let i = i % bits.len();
            let before = k.block_parities(n).unwrap();
            let after = k.flipped(i).unwrap().block_parities(n).unwrap();
            let diff: Vec<usize> = before.xor(&after).unwrap().iter_ones().collect();
            prop_assert_eq!(diff, std::vec![i / n]);
        }
    }
}
