//! CRC-64 digest of a key string.
//!
//! The parameter set is CRC-64/XZ (poly `0x42F0E1EBA9EA3693`, init and
//! xorout all ones, reflected input and output). Its identifier travels in
//! the session HELLO so that both ends can confirm they digest the same way.

use ::crc::{Crc, CRC_64_XZ};

use crate::bits::BitString;

/// Wire identifier of CRC-64/XZ.
pub const CRC64_XZ_ID: u16 = 1;

/// Published check value of CRC-64/XZ over `b"123456789"`.
pub const CRC64_XZ_CHECK: u64 = 0x995D_C9BB_DF19_39FA;

const XZ: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// CRC-64/XZ over raw octets.
pub fn crc64_bytes(bytes: &[u8]) -> u64 {
    XZ.checksum(bytes)
}

/// Digest of the packed key, bits consumed in ascending index order, eight
/// per octet with the lowest index in the least significant position.
pub fn crc64(key: &BitString) -> u64 {
    let mut digest = XZ.digest();
    let full = key.len() / 64;
    for w in &key.words()[..full] {
        digest.update(&w.to_le_bytes());
    }
    let tail_bytes = (key.len() % 64).div_ceil(8);
    if tail_bytes > 0 {
        digest.update(&key.words()[full].to_le_bytes()[..tail_bytes]);
    }
    digest.finalize()
}
