//! Maximal-length Galois LFSRs.
//!
//! A register of width `w` holds a nonzero state `s < 2^w`; one clock
//! multiplies `s` by `x` modulo a primitive feedback polynomial of degree
//! `w`, so the state walks through all `2^w - 1` nonzero values before
//! repeating.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Version of [`PRIMITIVE_POLYNOMIALS`]; both parties exchange it in HELLO.
pub const TAP_TABLE_VERSION: u16 = 1;

pub const MIN_WIDTH: u32 = 2;
pub const MAX_WIDTH: u32 = 24;

/// One primitive polynomial per width, the `x^w` term included.
/// Entry `k` is for width `k + MIN_WIDTH`.
pub const PRIMITIVE_POLYNOMIALS: [u64; (MAX_WIDTH - MIN_WIDTH + 1) as usize] = [
    0x7,        // x^2 + x + 1
    0xb,        // x^3 + x + 1
    0x13,       // x^4 + x + 1
    0x25,       // x^5 + x^2 + 1
    0x43,       // x^6 + x + 1
    0x83,       // x^7 + x + 1
    0x11d,      // x^8 + x^4 + x^3 + x^2 + 1
    0x211,      // x^9 + x^4 + 1
    0x409,      // x^10 + x^3 + 1
    0x805,      // x^11 + x^2 + 1
    0x1053,     // x^12 + x^6 + x^4 + x + 1
    0x201b,     // x^13 + x^4 + x^3 + x + 1
    0x402b,     // x^14 + x^5 + x^3 + x + 1
    0x8003,     // x^15 + x + 1
    0x1100b,    // x^16 + x^12 + x^3 + x + 1
    0x20009,    // x^17 + x^3 + 1
    0x40081,    // x^18 + x^7 + 1
    0x80027,    // x^19 + x^5 + x^2 + x + 1
    0x100009,   // x^20 + x^3 + 1
    0x200005,   // x^21 + x^2 + 1
    0x400003,   // x^22 + x + 1
    0x800021,   // x^23 + x^5 + 1
    0x1000087,  // x^24 + x^7 + x^2 + x + 1
];

/// Shipped feedback polynomial for `width`.
pub fn shipped_polynomial(width: u32) -> Result<u64> {
    if (MIN_WIDTH..=MAX_WIDTH).contains(&width) {
        Ok(PRIMITIVE_POLYNOMIALS[(width - MIN_WIDTH) as usize])
    } else {
        Err(Error::UnsupportedWidth(width))
    }
}

/// Register width, feedback polynomial and starting state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LfsrSpec {
    width: u32,
    poly: u64,
    seed: u64,
}

impl LfsrSpec {
    /// Spec using the shipped polynomial for `width`.
    pub fn new(width: u32, seed: u64) -> Result<Self> {
        let poly = shipped_polynomial(width)?;
        Self::checked(width, poly, seed)
    }

    /// Spec with caller-supplied feedback polynomial (`x^w` term included).
    /// The polynomial is checked for primitivity.
    pub fn with_polynomial(width: u32, poly: u64, seed: u64) -> Result<Self> {
        if !(MIN_WIDTH..=32).contains(&width) {
            return Err(Error::UnsupportedWidth(width));
        }
        if !is_primitive(poly, width) {
            return Err(Error::NonPrimitiveTaps { taps: poly, width });
        }
        Self::checked(width, poly, seed)
    }

    fn checked(width: u32, poly: u64, seed: u64) -> Result<Self> {
        if seed == 0 || seed >> width != 0 {
            return Err(Error::InvalidSeed { seed, width });
        }
        Ok(Self { width, poly, seed })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn polynomial(&self) -> u64 {
        self.poly
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn period(&self) -> u64 {
        (1u64 << self.width) - 1
    }

    pub fn register(&self) -> Lfsr {
        Lfsr {
            state: self.seed,
            poly: self.poly,
            width: self.width,
        }
    }
}

/// A running register. Iterating yields the current state, then clocks.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u64,
    poly: u64,
    width: u32,
}

impl Lfsr {
    #[inline]
    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn clock(&mut self) -> u64 {
        let s = self.state << 1;
        self.state = if (s >> self.width) & 1 == 1 { s ^ self.poly } else { s };
        self.state
    }
}

impl Iterator for Lfsr {
    type Item = u64;

    #[inline]
    fn next(&mut self) -> Option<u64> {
        let out = self.state;
        self.clock();
        Some(out)
    }
}

/// The first `count` register states, the seed first.
pub fn lfsr_stream(spec: &LfsrSpec, count: u64) -> Result<Vec<u64>> {
    if count > spec.period() {
        return Err(Error::InvalidArgument(alloc::format!(
            "count {count} exceeds period {}",
            spec.period()
        )));
    }
    Ok(spec.register().take(count as usize).collect())
}

/// Visiting order of all positions of a key of length `len = 2^w`:
/// position 0 first, then the `2^w - 1` register states in clock order,
/// each state used directly as a position.
pub fn position_sequence(spec: &LfsrSpec, len: usize) -> Result<Vec<u32>> {
    if !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    if len != 1usize << spec.width() {
        return Err(Error::InvalidArgument(alloc::format!(
            "register width {} does not match key length {len}",
            spec.width()
        )));
    }
    let mut out = Vec::with_capacity(len);
    out.push(0);
    out.extend(spec.register().take(len - 1).map(|s| s as u32));
    Ok(out)
}

fn gf2_mulmod(mut a: u64, mut b: u64, poly: u64, width: u32) -> u64 {
    let mut r = 0;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        a <<= 1;
        if (a >> width) & 1 == 1 {
            a ^= poly;
        }
    }
    r
}

fn gf2_powmod(mut e: u64, poly: u64, width: u32) -> u64 {
    let mut base = 2u64;
    let mut r = 1u64;
    while e != 0 {
        if e & 1 == 1 {
            r = gf2_mulmod(r, base, poly, width);
        }
        base = gf2_mulmod(base, base, poly, width);
        e >>= 1;
    }
    r
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Whether `poly` (degree `width`, `x^w` term included) is primitive over
/// GF(2): `x` has multiplicative order exactly `2^w - 1`.
pub fn is_primitive(poly: u64, width: u32) -> bool {
    if width == 0 || width > 32 || (poly >> width) != 1 || poly & 1 == 0 {
        return false;
    }
    let order = (1u64 << width) - 1;
    if gf2_powmod(order, poly, width) != 1 {
        return false;
    }
    prime_factors(order)
        .into_iter()
        .all(|q| gf2_powmod(order / q, poly, width) != 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use std::collections::HashSet;

    fn measured_period(spec: &LfsrSpec) -> u64 {
        let mut r = spec.register();
        let mut n = 0;
        loop {
            r.clock();
            n += 1;
            assert_ne!(r.state(), 0);
            if r.state() == spec.seed() {
                return n;
            }
        }
    }

    #[test]
    fn width_three_visits_every_nonzero_state() {
        let spec = LfsrSpec::with_polynomial(3, 0b1011, 1).unwrap();
        let states = lfsr_stream(&spec, 7).unwrap();
        let mut sorted = states.clone();
        sorted.sort();
        assert_eq!(sorted, vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(states, vec![1, 2, 4, 3, 6, 7, 5]);
    }

    #[test]
    fn zero_seed_rejected() {
        assert!(matches!(LfsrSpec::new(8, 0), Err(Error::InvalidSeed { .. })));
        assert!(matches!(LfsrSpec::new(8, 256), Err(Error::InvalidSeed { .. })));
        assert!(LfsrSpec::new(1, 1).is_err());
        assert!(LfsrSpec::new(25, 1).is_err());
    }

    #[test]
    fn non_primitive_taps_rejected() {
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2
        assert!(matches!(
            LfsrSpec::with_polynomial(4, 0b10101, 1),
            Err(Error::NonPrimitiveTaps { .. })
        ));
        // x^4 + x^3 + x^2 + x + 1 is irreducible but has order 5
        assert!(!is_primitive(0b11111, 4));
    }

    #[test]
    fn width_sixteen_period() {
        let spec = LfsrSpec::new(16, 5).unwrap();
        assert_eq!(measured_period(&spec), 65535);
        let states = lfsr_stream(&spec, 65535).unwrap();
        let distinct: HashSet<u64> = states.iter().copied().collect();
        assert_eq!(distinct.len(), 65535);
        assert!(lfsr_stream(&spec, 65536).is_err());
    }

    #[test]
    fn shipped_table_is_primitive() {
        for w in MIN_WIDTH..=MAX_WIDTH {
            let poly = shipped_polynomial(w).unwrap();
            assert!(is_primitive(poly, w), "width {w}");
        }
        // the algebraic check agrees with brute-force period measurement
        for w in MIN_WIDTH..=18 {
            let spec = LfsrSpec::new(w, 1).unwrap();
            assert_eq!(measured_period(&spec), spec.period(), "width {w}");
        }
    }

    #[test]
    fn position_sequence_covers_everything() {
        let spec = LfsrSpec::new(3, 5).unwrap();
        let seq = position_sequence(&spec, 8).unwrap();
        let mut sorted = seq.clone();
        sorted.sort();
        assert_eq!(sorted, (0..8).collect::<Vec<u32>>());
        assert_eq!(seq, position_sequence(&spec, 8).unwrap());
        let other = position_sequence(&LfsrSpec::new(3, 6).unwrap(), 8).unwrap();
        assert_ne!(seq, other);
        assert_eq!(position_sequence(&spec, 6), Err(Error::NotPowerOfTwo(6)));
    }
}
