//! Message catalog and framing.
//!
//! Frame layout: 4-byte big-endian payload length, 1-byte tag, payload.
//! Integers are big-endian. Bit vectors are a 4-byte bit count followed by
//! the bits packed eight per octet, lowest index in the least significant
//! bit. Block indices are 4-byte big-endian.

use alloc::vec;
use alloc::vec::Vec;

use crate::bits::BitString;
use crate::ledger::LeakLedger;
use crate::protocol::AbortReason;

pub const PROTOCOL_VERSION: u16 = 1;

/// Upper bound on a frame payload.
pub const MAX_FRAME_PAYLOAD: usize = 16 * 1024 * 1024;

pub const FRAME_HEADER_LEN: usize = 5;

pub mod tag {
    pub const HELLO: u8 = 0x01;
    pub const PARITIES: u8 = 0x02;
    pub const MISMATCHES: u8 = 0x03;
    pub const HALF_PARITY_QUERY: u8 = 0x04;
    pub const HALF_PARITY: u8 = 0x05;
    pub const CRC: u8 = 0x06;
    pub const VERDICT: u8 = 0x07;
    pub const ABORT: u8 = 0x08;
    pub const CASCADE_PARITY_REQUEST: u8 = 0x09;
    pub const BLOCK_PARITIES_CASCADE: u8 = 0x0A;
    pub const SAMPLE: u8 = 0x0B;
    pub const ESTIMATE: u8 = 0x0C;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ProtocolId {
    /// Parity comparison, Hamming correction, block doubling, LFSR
    /// permutation.
    HammingLfsr = 1,
    Cascade = 2,
}

impl ProtocolId {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::HammingLfsr),
            2 => Some(Self::Cascade),
            _ => None,
        }
    }
}

/// Session parameters both ends must agree on field for field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hello {
    pub version: u16,
    pub protocol: ProtocolId,
    pub segment: u32,
    pub key_length: u64,
    pub error_rate: f64,
    /// `n0` for the Hamming protocol, `k1` for Cascade.
    pub initial_block: u32,
    /// LFSR seeds; Cascade carries its shuffle seed in `seed1`.
    pub seed1: u64,
    pub seed2: u64,
    pub crc_variant: u16,
    pub tap_table_version: u16,
    /// Cascade pass count; zero for the Hamming protocol.
    pub passes: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    /// Bob's block parities for one pass.
    Parities { pass: u32, bits: BitString },
    /// Alice's mismatched blocks. `syndromes[k]` belongs to `blocks[k]`;
    /// blocks past the end of `syndromes` carry none (partial tail block).
    Mismatches {
        pass: u32,
        rows: u8,
        blocks: Vec<u32>,
        syndromes: Vec<u32>,
    },
    /// Request for Alice's parity of `[start, end)` in the pass ordering.
    HalfParityQuery { pass: u32, start: u32, end: u32 },
    HalfParity {
        pass: u32,
        start: u32,
        end: u32,
        parity: bool,
    },
    Crc(u64),
    Verdict(bool),
    Abort(AbortReason),
    CascadeParityRequest { pass: u32 },
    CascadeParities { pass: u32, bits: BitString },
    /// Bob's bits at the agreed sample positions.
    Sample { bits: BitString },
    Estimate { mismatches: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("truncated message")]
    Truncated,
    #[error("frame payload of {0} bytes exceeds the cap")]
    Oversized(usize),
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("invalid field value")]
    InvalidValue,
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Hello(_) => tag::HELLO,
            Message::Parities { .. } => tag::PARITIES,
            Message::Mismatches { .. } => tag::MISMATCHES,
            Message::HalfParityQuery { .. } => tag::HALF_PARITY_QUERY,
            Message::HalfParity { .. } => tag::HALF_PARITY,
            Message::Crc(_) => tag::CRC,
            Message::Verdict(_) => tag::VERDICT,
            Message::Abort(_) => tag::ABORT,
            Message::CascadeParityRequest { .. } => tag::CASCADE_PARITY_REQUEST,
            Message::CascadeParities { .. } => tag::BLOCK_PARITIES_CASCADE,
            Message::Sample { .. } => tag::SAMPLE,
            Message::Estimate { .. } => tag::ESTIMATE,
        }
    }

    /// Key-derived bits this message discloses, by category. Counted from
    /// the message contents alone, so a channel tap can audit a session's
    /// own ledger.
    pub fn disclosed_bits(&self) -> LeakLedger {
        let mut l = LeakLedger::default();
        match self {
            Message::Parities { bits, .. } | Message::CascadeParities { bits, .. } => {
                l.parity_bits = bits.len() as u64
            }
            Message::HalfParity { .. } => l.parity_bits = 1,
            Message::Mismatches {
                rows, syndromes, ..
            } => l.syndrome_bits = syndromes.len() as u64 * *rows as u64,
            Message::Crc(_) => l.crc_bits = 64,
            Message::Sample { bits } => l.estimation_bits = bits.len() as u64,
            _ => {}
        }
        l
    }

    pub fn encode_payload(&self, out: &mut Vec<u8>) {
        match self {
            Message::Hello(h) => {
                out.extend_from_slice(&h.version.to_be_bytes());
                out.push(h.protocol as u8);
                out.extend_from_slice(&h.segment.to_be_bytes());
                out.extend_from_slice(&h.key_length.to_be_bytes());
                out.extend_from_slice(&h.error_rate.to_bits().to_be_bytes());
                out.extend_from_slice(&h.initial_block.to_be_bytes());
                out.extend_from_slice(&h.seed1.to_be_bytes());
                out.extend_from_slice(&h.seed2.to_be_bytes());
                out.extend_from_slice(&h.crc_variant.to_be_bytes());
                out.extend_from_slice(&h.tap_table_version.to_be_bytes());
                out.extend_from_slice(&h.passes.to_be_bytes());
            }
            Message::Parities { pass, bits } | Message::CascadeParities { pass, bits } => {
                out.extend_from_slice(&pass.to_be_bytes());
                put_bits(out, bits);
            }
            Message::Mismatches {
                pass,
                rows,
                blocks,
                syndromes,
            } => {
                out.extend_from_slice(&pass.to_be_bytes());
                out.push(*rows);
                out.extend_from_slice(&(blocks.len() as u32).to_be_bytes());
                for b in blocks {
                    out.extend_from_slice(&b.to_be_bytes());
                }
                out.extend_from_slice(&(syndromes.len() as u32).to_be_bytes());
                put_fields(out, syndromes, *rows);
            }
            Message::HalfParityQuery { pass, start, end } => {
                out.extend_from_slice(&pass.to_be_bytes());
                out.extend_from_slice(&start.to_be_bytes());
                out.extend_from_slice(&end.to_be_bytes());
            }
            Message::HalfParity {
                pass,
                start,
                end,
                parity,
            } => {
                out.extend_from_slice(&pass.to_be_bytes());
                out.extend_from_slice(&start.to_be_bytes());
                out.extend_from_slice(&end.to_be_bytes());
                out.push(*parity as u8);
            }
            Message::Crc(d) => out.extend_from_slice(&d.to_be_bytes()),
            Message::Verdict(ok) => out.push(*ok as u8),
            Message::Abort(r) => out.push(*r as u8),
            Message::CascadeParityRequest { pass } => out.extend_from_slice(&pass.to_be_bytes()),
            Message::Sample { bits } => put_bits(out, bits),
            Message::Estimate { mismatches } => out.extend_from_slice(&mismatches.to_be_bytes()),
        }
    }

    pub fn decode_payload(tag: u8, payload: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader { buf: payload };
        let msg = match tag {
            tag::HELLO => Message::Hello(Hello {
                version: r.u16()?,
                protocol: ProtocolId::from_u8(r.u8()?).ok_or(WireError::InvalidValue)?,
                segment: r.u32()?,
                key_length: r.u64()?,
                error_rate: f64::from_bits(r.u64()?),
                initial_block: r.u32()?,
                seed1: r.u64()?,
                seed2: r.u64()?,
                crc_variant: r.u16()?,
                tap_table_version: r.u16()?,
                passes: r.u16()?,
            }),
            tag::PARITIES => Message::Parities {
                pass: r.u32()?,
                bits: r.bits()?,
            },
            tag::BLOCK_PARITIES_CASCADE => Message::CascadeParities {
                pass: r.u32()?,
                bits: r.bits()?,
            },
            tag::MISMATCHES => {
                let pass = r.u32()?;
                let rows = r.u8()?;
                if rows > 32 {
                    return Err(WireError::InvalidValue);
                }
                let count = r.u32()? as usize;
                let mut blocks = Vec::with_capacity(count.min(r.buf.len() / 4));
                for _ in 0..count {
                    blocks.push(r.u32()?);
                }
                let syn_count = r.u32()? as usize;
                if syn_count > count {
                    return Err(WireError::InvalidValue);
                }
                let syndromes = r.fields(syn_count, rows)?;
                Message::Mismatches {
                    pass,
                    rows,
                    blocks,
                    syndromes,
                }
            }
            tag::HALF_PARITY_QUERY => Message::HalfParityQuery {
                pass: r.u32()?,
                start: r.u32()?,
                end: r.u32()?,
            },
            tag::HALF_PARITY => Message::HalfParity {
                pass: r.u32()?,
                start: r.u32()?,
                end: r.u32()?,
                parity: r.flag()?,
            },
            tag::CRC => Message::Crc(r.u64()?),
            tag::VERDICT => Message::Verdict(r.flag()?),
            tag::ABORT => {
                Message::Abort(AbortReason::from_u8(r.u8()?).ok_or(WireError::InvalidValue)?)
            }
            tag::CASCADE_PARITY_REQUEST => Message::CascadeParityRequest { pass: r.u32()? },
            tag::SAMPLE => Message::Sample { bits: r.bits()? },
            tag::ESTIMATE => Message::Estimate {
                mismatches: r.u32()?,
            },
            other => return Err(WireError::UnknownTag(other)),
        };
        if !r.buf.is_empty() {
            return Err(WireError::TrailingBytes(r.buf.len()));
        }
        Ok(msg)
    }

    /// Complete frame: header, tag and payload.
    pub fn encode_frame(&self) -> Vec<u8> {
        let mut out = vec![0u8; FRAME_HEADER_LEN];
        out[4] = self.tag();
        self.encode_payload(&mut out);
        let len = (out.len() - FRAME_HEADER_LEN) as u32;
        out[..4].copy_from_slice(&len.to_be_bytes());
        out
    }

    /// Decodes one complete frame; the slice must hold exactly one.
    pub fn decode_frame(frame: &[u8]) -> Result<Self, WireError> {
        let header: [u8; FRAME_HEADER_LEN] = frame
            .get(..FRAME_HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or(WireError::Truncated)?;
        let (len, tag) = parse_header(&header)?;
        let payload = &frame[FRAME_HEADER_LEN..];
        if payload.len() < len {
            return Err(WireError::Truncated);
        }
        if payload.len() > len {
            return Err(WireError::TrailingBytes(payload.len() - len));
        }
        Self::decode_payload(tag, payload)
    }
}

/// Payload length and tag from a frame header, enforcing the size cap.
pub fn parse_header(header: &[u8; FRAME_HEADER_LEN]) -> Result<(usize, u8), WireError> {
    let len = u32::from_be_bytes([header[0], header[1], header[2], header[3]]) as usize;
    if len > MAX_FRAME_PAYLOAD {
        return Err(WireError::Oversized(len));
    }
    Ok((len, header[4]))
}

fn put_bits(out: &mut Vec<u8>, bits: &BitString) {
    out.extend_from_slice(&(bits.len() as u32).to_be_bytes());
    out.extend_from_slice(&bits.to_bytes());
}

/// `width`-bit fields packed LSB first into a continuous bit stream.
fn put_fields(out: &mut Vec<u8>, values: &[u32], width: u8) {
    let mut acc = 0u64;
    let mut filled = 0u32;
    for &v in values {
        acc |= ((v as u64) & ((1u64 << width) - 1)) << filled;
        filled += width as u32;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn flag(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::InvalidValue),
        }
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bits(&mut self) -> Result<BitString, WireError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len.div_ceil(8))?;
        BitString::from_bytes(bytes, len).map_err(|_| WireError::InvalidValue)
    }

    fn fields(&mut self, count: usize, width: u8) -> Result<Vec<u32>, WireError> {
        let bytes = self.take((count * width as usize).div_ceil(8))?;
        let mut out = Vec::with_capacity(count);
        let mut acc = 0u64;
        let mut have = 0u32;
        let mut it = bytes.iter();
        for _ in 0..count {
            while have < width as u32 {
                acc |= (*it.next().ok_or(WireError::Truncated)? as u64) << have;
                have += 8;
            }
            out.push((acc & ((1u64 << width) - 1)) as u32);
            acc >>= width;
            have -= width as u32;
        }
        Ok(out)
    }
}
