//! Key permutations built from LFSR position streams, and the separation
//! metric that scores how well a permutation scatters former block-mates.
//!
//! Convention: applying a plan `π` to a key puts input bit `i` at output
//! position `π(i)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::bits::BitString;
use crate::lfsr::{self, Lfsr, LfsrSpec};
use crate::{Error, Result};

/// A bijection on `[0, len)` with its inverse.
#[derive(Debug, Clone)]
pub struct PermutationPlan {
    forward: Vec<u32>,
    inverse: Vec<u32>,
    identity_swaps: usize,
}

impl PartialEq for PermutationPlan {
    fn eq(&self, other: &Self) -> bool {
        self.forward == other.forward
    }
}

impl Eq for PermutationPlan {}

impl PermutationPlan {
    pub fn identity(len: usize) -> Self {
        let forward: Vec<u32> = (0..len as u32).collect();
        Self {
            inverse: forward.clone(),
            forward,
            identity_swaps: 0,
        }
    }

    /// Plan from an explicit image table; rejects anything that is not a
    /// bijection.
    pub fn from_images(forward: Vec<u32>) -> Result<Self> {
        let mut inverse = vec![u32::MAX; forward.len()];
        for (i, &img) in forward.iter().enumerate() {
            let slot = inverse.get_mut(img as usize).ok_or(Error::IndexOutOfRange {
                index: img as usize,
                len: forward.len(),
            })?;
            if *slot != u32::MAX {
                return Err(Error::InvalidArgument(alloc::format!(
                    "position {img} is the image of two inputs"
                )));
            }
            *slot = i as u32;
        }
        Ok(Self {
            forward,
            inverse,
            identity_swaps: 0,
        })
    }

    /// Composition of the transpositions `(a, b)` applied to the key in
    /// order.
    pub fn from_transpositions<I>(len: usize, swaps: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        // holder[pos] = original index currently sitting at pos
        let mut holder: Vec<u32> = (0..len as u32).collect();
        let mut identity_swaps = 0;
        for (a, b) in swaps {
            if a as usize >= len || b as usize >= len {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b) as usize,
                    len,
                });
            }
            if a == b {
                identity_swaps += 1;
            }
            holder.swap(a as usize, b as usize);
        }
        let mut forward = vec![0u32; len];
        for (pos, &orig) in holder.iter().enumerate() {
            forward[orig as usize] = pos as u32;
        }
        Ok(Self {
            forward,
            inverse: holder,
            identity_swaps,
        })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    /// `π(i)`.
    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.forward[i] as usize
    }

    /// `π⁻¹(j)`.
    #[inline]
    pub fn preimage(&self, j: usize) -> usize {
        self.inverse[j] as usize
    }

    pub fn images(&self) -> &[u32] {
        &self.forward
    }

    pub fn inverse(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
            identity_swaps: self.identity_swaps,
        }
    }

    /// Transpositions that swapped a position with itself. A large count
    /// means the two generating sequences coincide (e.g. equal seeds).
    pub fn identity_swaps(&self) -> usize {
        self.identity_swaps
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.len()];
        for &img in &self.forward {
            match seen.get_mut(img as usize) {
                Some(s) if !*s => *s = true,
                _ => return false,
            }
        }
        true
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Self) -> Result<Self> {
        if self.len() != next.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: next.len(),
            });
        }
        let forward: Vec<u32> = self.forward.iter().map(|&m| next.forward[m as usize]).collect();
        let mut inverse = vec![0u32; forward.len()];
        for (i, &m) in forward.iter().enumerate() {
            inverse[m as usize] = i as u32;
        }
        Ok(Self {
            forward,
            inverse,
            identity_swaps: 0,
        })
    }
}

/// Output bit `π(i)` holds input bit `i`.
pub fn apply_permutation(key: &BitString, plan: &PermutationPlan) -> Result<BitString> {
    if key.len() != plan.len() {
        return Err(Error::LengthMismatch {
            left: key.len(),
            right: plan.len(),
        });
    }
    let mut words = vec![0u64; key.words().len()];
    for i in key.iter_ones() {
        let j = plan.image(i);
        words[j / 64] |= 1 << (j % 64);
    }
    BitString::from_words(words, key.len())
}

/// Smallest register width whose state space covers `[0, len)`.
pub fn width_for(len: usize) -> u32 {
    let bits = usize::BITS - (len.max(2) - 1).leading_zeros();
    bits.max(lfsr::MIN_WIDTH)
}

/// Position stream for a key of arbitrary length: position 0, then the
/// register states that fall inside `[0, len)`, in clock order. Successive
/// calls to [`PositionStream::next_sequence`] keep clocking the same
/// register.
#[derive(Debug, Clone)]
pub struct PositionStream {
    reg: Lfsr,
    len: usize,
    period: u64,
}

impl PositionStream {
    pub fn new(seed: u64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptySegment);
        }
        let spec = LfsrSpec::new(width_for(len), seed)?;
        Ok(Self {
            reg: spec.register(),
            len,
            period: spec.period(),
        })
    }

    pub fn next_sequence(&mut self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len);
        out.push(0);
        if self.len == 1 {
            return out;
        }
        for _ in 0..self.period {
            let s = self.reg.next().unwrap_or_default();
            if (s as usize) < self.len {
                out.push(s as u32);
            }
        }
        out
    }
}

/// Pair-swap permutation driven by two independently seeded registers:
/// for `i = 0..len`, swap positions `a_i` and `b_i`.
pub fn two_lfsr_permutation(seed1: u64, seed2: u64, len: usize) -> Result<PermutationPlan> {
    if !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    TwoLfsrPermuter::new(seed1, seed2, len)?.next_plan()
}

/// Pair-swap permutation from a single register: swap `c_{2q}` with
/// `c_{2q+1}` for every `q`.
pub fn one_lfsr_permutation(seed: u64, len: usize) -> Result<PermutationPlan> {
    if !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    let c = PositionStream::new(seed, len)?.next_sequence();
    PermutationPlan::from_transpositions(len, c.chunks_exact(2).map(|p| (p[0], p[1])))
}

/// Two free-running registers producing one pair-swap plan per call. Both
/// parties construct it from the session seeds and call
/// [`TwoLfsrPermuter::next_plan`] once per pass.
#[derive(Debug, Clone)]
pub struct TwoLfsrPermuter {
    first: PositionStream,
    second: PositionStream,
    len: usize,
}

impl TwoLfsrPermuter {
    pub fn new(seed1: u64, seed2: u64, len: usize) -> Result<Self> {
        Ok(Self {
            first: PositionStream::new(seed1, len)?,
            second: PositionStream::new(seed2, len)?,
            len,
        })
    }

    pub fn next_plan(&mut self) -> Result<PermutationPlan> {
        let a = self.first.next_sequence();
        let b = self.second.next_sequence();
        PermutationPlan::from_transpositions(self.len, a.into_iter().zip(b))
    }
}

/// How well a permutation separates bits that shared a block.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub d_tot: f64,
    pub per_bit: Option<Vec<f64>>,
    pub n_pre: usize,
    pub n_post: usize,
}

/// Mean separation degree of `plan` for pre-permutation blocks of `n_pre`
/// bits and post-permutation blocks of `n_post` bits.
///
/// For bit `p`, `D_p` is the fraction of its block-mates `q` whose images
/// land in a different post-permutation block than the image of `p`. A
/// bit alone in a trailing block has no mates and scores 1. Runs in `O(N)`
/// by counting post-block occupancy per pre-block.
pub fn separation_score(
    plan: &PermutationPlan,
    n_pre: usize,
    n_post: usize,
    keep_per_bit: bool,
) -> Result<SeparationReport> {
    let len = plan.len();
    if n_pre < 2 || n_pre > len {
        return Err(Error::InvalidBlockLength { block: n_pre, len });
    }
    if n_post == 0 || n_post > len {
        return Err(Error::InvalidBlockLength { block: n_post, len });
    }
    let mut occupancy = vec![0u32; len.div_ceil(n_post)];
    let mut per_bit = if keep_per_bit { Some(Vec::with_capacity(len)) } else { None };
    let mut total = 0.0;
    for start in (0..len).step_by(n_pre) {
        let end = (start + n_pre).min(len);
        let mates = (end - start - 1) as f64;
        for p in start..end {
            occupancy[plan.image(p) / n_post] += 1;
        }
        for p in start..end {
            let shared = occupancy[plan.image(p) / n_post] - 1;
            let d = if mates == 0.0 { 1.0 } else { 1.0 - shared as f64 / mates };
            total += d;
            if let Some(v) = per_bit.as_mut() {
                v.push(d);
            }
        }
        for p in start..end {
            occupancy[plan.image(p) / n_post] = 0;
        }
    }
    Ok(SeparationReport {
        d_tot: total / len as f64,
        per_bit,
        n_pre,
        n_post,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct pair count over every (p, q) in the same pre-block.
    fn brute_force_d_tot(plan: &PermutationPlan, n_pre: usize, n_post: usize) -> f64 {
        let len = plan.len();
        let mut total = 0.0;
        for p in 0..len {
            let block = p / n_pre;
            let lo = block * n_pre;
            let hi = (lo + n_pre).min(len);
            if hi - lo == 1 {
                total += 1.0;
                continue;
            }
            let apart = (lo..hi)
                .filter(|&q| q != p)
                .filter(|&q| plan.image(p) / n_post != plan.image(q) / n_post)
                .count();
            total += apart as f64 / (hi - lo - 1) as f64;
        }
        total / len as f64
    }

    fn random_plan(len: usize, seed: u64) -> PermutationPlan {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images: Vec<u32> = (0..len as u32).collect();
        images.shuffle(&mut rng);
        PermutationPlan::from_images(images).unwrap()
    }

    #[test]
    fn identity_scores_zero() {
        let plan = PermutationPlan::identity(256);
        let r = separation_score(&plan, 16, 16, true).unwrap();
        assert_eq!(r.d_tot, 0.0);
        let per_bit = r.per_bit.unwrap();
        let mean = per_bit.iter().sum::<f64>() / per_bit.len() as f64;
        assert_eq!(mean, r.d_tot);
    }

    #[test]
    fn stride_interleave_scores_one() {
        // send bit j of block b to position j * blocks + b
        let (len, n) = (256usize, 16usize);
        let blocks = len / n;
        let images: Vec<u32> = (0..len).map(|p| ((p % n) * blocks + p / n) as u32).collect();
        let plan = PermutationPlan::from_images(images).unwrap();
        assert_eq!(brute_force_d_tot(&plan, n, n), 1.0);
        assert_eq!(separation_score(&plan, n, n, false).unwrap().d_tot, 1.0);
    }

    #[test]
    fn rejects_single_bit_blocks() {
        let plan = PermutationPlan::identity(8);
        assert!(separation_score(&plan, 1, 4, false).is_err());
        assert!(separation_score(&plan, 2, 0, false).is_err());
    }

    #[test]
    fn constructors_yield_bijections() {
        let two = two_lfsr_permutation(5, 78, 1 << 16).unwrap();
        assert!(two.is_bijection());
        assert_eq!(two, two_lfsr_permutation(5, 78, 1 << 16).unwrap());
        let one = one_lfsr_permutation(5, 1 << 16).unwrap();
        assert!(one.is_bijection());
        assert_eq!(one, one_lfsr_permutation(5, 1 << 16).unwrap());
        assert!(two_lfsr_permutation(5, 78, 1000).is_err());
        assert!(two_lfsr_permutation(0, 78, 1024).is_err());
    }

    #[test]
    fn equal_seeds_are_flagged_by_identity_swaps() {
        let plan = two_lfsr_permutation(9, 9, 1024).unwrap();
        assert_eq!(plan.identity_swaps(), 1024);
        assert_eq!(plan, PermutationPlan::identity(1024));
    }

    #[test]
    fn apply_and_invert() {
        let plan = two_lfsr_permutation(5, 78, 1024).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<bool> = (0..1024).map(|_| rand::Rng::random(&mut rng)).collect();
        let key = BitString::from_bools(&bits).unwrap();
        let moved = apply_permutation(&key, &plan).unwrap();
        for i in 0..1024 {
            assert_eq!(moved.bit(plan.image(i)), key.bit(i));
        }
        assert_eq!(moved.count_ones(), key.count_ones());
        assert_eq!(apply_permutation(&moved, &plan.inverse()).unwrap(), key);
        assert_eq!(apply_permutation(&key, &PermutationPlan::identity(1024)).unwrap(), key);
        let short = BitString::zeros(10).unwrap();
        assert!(apply_permutation(&short, &plan).is_err());
    }

    #[test]
    fn general_length_stream_covers_range() {
        for len in [1usize, 2, 3, 5, 100, 1000, 4097] {
            let mut s = PositionStream::new(3, len).unwrap();
            for _ in 0..2 {
                let mut seq = s.next_sequence();
                seq.sort();
                assert_eq!(seq, (0..len as u32).collect::<Vec<_>>());
            }
            let plan = TwoLfsrPermuter::new(3, 2, len).unwrap().next_plan().unwrap();
            assert!(plan.is_bijection());
        }
    }

    #[test]
    fn power_of_two_stream_matches_position_sequence() {
        let spec = LfsrSpec::new(10, 77).unwrap();
        let direct = lfsr::position_sequence(&spec, 1024).unwrap();
        assert_eq!(PositionStream::new(77, 1024).unwrap().next_sequence(), direct);
    }

    #[test]
    fn occupancy_matches_brute_force_on_structured_plans() {
        let plan = two_lfsr_permutation(5, 78, 4096).unwrap();
        for (a, b) in [(16, 16), (16, 32), (64, 128), (4096, 4096), (2, 1)] {
            let fast = separation_score(&plan, a, b, false).unwrap().d_tot;
            assert!((fast - brute_force_d_tot(&plan, a, b)).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn occupancy_matches_brute_force(len in 2usize..4096, seed in any::<u64>(), a in 2usize..64, b in 1usize..64) {
            let plan = random_plan(len, seed);
            let a = a.min(len);
            let b = b.min(len);
            let r = separation_score(&plan, a, b, true).unwrap();
            prop_assert!((r.d_tot - brute_force_d_tot(&plan, a, b)).abs() < 1e-9);
            prop_assert!(r.per_bit.unwrap().iter().all(|d| (0.0..=1.0).contains(d)));
        }

        #[test]
        fn plans_are_bijections(len in 1usize..3000, s1 in 1u64..4096, s2 in 1u64..4096) {
            let w = width_for(len);
            let (s1, s2) = (s1 % (1 << w), s2 % (1 << w));
            prop_assume!(s1 != 0 && s2 != 0);
            let plan = TwoLfsrPermuter::new(s1, s2, len).unwrap().next_plan().unwrap();
            prop_assert!(plan.is_bijection());
            let back = plan.then(&plan.inverse()).unwrap();
            prop_assert_eq!(back, PermutationPlan::identity(len));
        }
    }
}
