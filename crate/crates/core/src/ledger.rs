//! Disclosed-bit accounting and efficiency against the Shannon limit.

use core::ops::AddAssign;

/// Key-derived bits disclosed on the public channel, by category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LeakLedger {
    /// Block parities, including BINARY half-block parities.
    pub parity_bits: u64,
    pub syndrome_bits: u64,
    pub crc_bits: u64,
    /// Bits sacrificed for error-rate estimation.
    pub estimation_bits: u64,
}

impl LeakLedger {
    pub fn total(&self) -> u64 {
        self.parity_bits + self.syndrome_bits + self.crc_bits + self.estimation_bits
    }
}

impl AddAssign for LeakLedger {
    fn add_assign(&mut self, rhs: Self) {
        self.parity_bits += rhs.parity_bits;
        self.syndrome_bits += rhs.syndrome_bits;
        self.crc_bits += rhs.crc_bits;
        self.estimation_bits += rhs.estimation_bits;
    }
}

/// Binary entropy in bits; 0 at both endpoints.
pub fn shannon_h(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * libm::log2(p) - (1.0 - p) * libm::log2(1.0 - p)
}

/// Leaked bits over the Shannon limit `N * h(p)`. `None` when the limit is
/// zero.
pub fn efficiency(leaked_bits: u64, key_length: usize, p: f64) -> Option<f64> {
    let limit = key_length as f64 * shannon_h(p);
    if limit > 0.0 && limit.is_finite() {
        Some(leaked_bits as f64 / limit)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_values() {
        assert_eq!(shannon_h(0.5), 1.0);
        assert_eq!(shannon_h(0.0), 0.0);
        assert_eq!(shannon_h(1.0), 0.0);
        // 0.01*log2(100) + 0.99*log2(1/0.99) = 0.080793136...
        assert!((shannon_h(0.01) - 0.0808).abs() < 1e-4);
        assert!((shannon_h(0.01) - 0.080_793_136_4).abs() < 1e-9);
        assert!((shannon_h(0.2) - shannon_h(0.8)).abs() < 1e-15);
    }

    #[test]
    fn efficiency_is_linear_in_leak() {
        let n = 65536;
        let p = 0.02;
        let limit = n as f64 * shannon_h(p);
        let f1 = efficiency(limit.round() as u64, n, p).unwrap();
        assert!((f1 - 1.0).abs() < 1e-4);
        let a = efficiency(5000, n, p).unwrap();
        let b = efficiency(10000, n, p).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        assert_eq!(efficiency(100, n, 0.0), None);
    }

    #[test]
    fn ledger_total_sums_categories() {
        let mut l = LeakLedger {
            parity_bits: 10,
            syndrome_bits: 6,
            crc_bits: 64,
            estimation_bits: 0,
        };
        assert_eq!(l.total(), 80);
        l += LeakLedger {
            estimation_bits: 4,
            ..Default::default()
        };
        assert_eq!(l.total(), 84);
    }
}
