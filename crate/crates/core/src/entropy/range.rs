//! 32-bit renormalizing range coder with carry propagation.
//!
//! The encoder keeps a 33-bit `low` (bit 32 is the pending carry) and a
//! 32-bit `range`; bytes leave through a one-byte cache plus a count of
//! pending `0xFF` bytes, so a late carry can still ripple into them.
//! The leading byte of such a stream is always zero and is not stored; the
//! flush writes only the bytes needed to pin a value inside the final
//! interval, and the decoder reads missing trailing bytes as zero. Every
//! stream ends with a 16-bit terminator, which the decoder checks together
//! with exact consumption of the input.

use super::cdf::{CdfTable, PRECISION};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;
const TERMINATOR: u32 = 0xC0DE;
/// Raw bits per coder call when writing escape payloads.
const RAW_CHUNK: u32 = 16;
/// Width of the escape length prefix (enough for lengths 0..=32).
const ESCAPE_LEN_BITS: u32 = 6;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    /// The first byte shifted out is the implicit zero.
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            skip_first: true,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                if std::mem::take(&mut self.skip_first) {
                    debug_assert_eq!(byte.wrapping_add(carry), 0);
                } else {
                    self.out.push(byte.wrapping_add(carry));
                }
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Narrows to `[start, start + freq)` out of `2^bits`.
    fn encode_interval(&mut self, start: u32, freq: u32, bits: u32) {
        let r = self.range >> bits;
        self.low += r as u64 * start as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Writes `count <= 32` raw bits of `value`.
    pub fn encode_bits(&mut self, value: u32, count: u32) {
        let mut done = 0;
        while done < count {
            let n = (count - done).min(RAW_CHUNK);
            let chunk = (value as u64 >> done) as u32 & ((1u32 << n) - 1);
            self.encode_interval(chunk, 1, n);
            done += n;
        }
    }

    /// Codes `value` with `table`, escaping it if it lies outside the alphabet.
    pub fn encode(&mut self, table: &CdfTable, value: i32) {
        match table.symbol_of(value) {
            Some(s) => {
                let (start, freq) = table.range(s);
                self.encode_interval(start, freq, PRECISION);
            }
            None => {
                let (start, freq) = table.range(table.escape_symbol());
                self.encode_interval(start, freq, PRECISION);
                let z = zigzag(value);
                let len = 32 - z.leading_zeros();
                self.encode_bits(len, ESCAPE_LEN_BITS);
                self.encode_bits(z, len);
            }
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.encode_bits(TERMINATOR, 16);
        // Any value in [low, low + range) identifies the stream; range >= 2^24
        // after renormalization, so one with 24 zero low bits exists and only
        // its top byte has to be written.
        self.low = (self.low + 0x00FF_FFFF) & !0x00FF_FFFF;
        self.shift_low();
        self.shift_low();
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

/// Zero bytes the short flush leaves implicit: the flush writes only the top
/// byte of the final 32-bit window, so the decoder reads exactly this many
/// past the end of a well-formed stream.
const IMPLICIT_ZEROS: usize = 3;

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            code: 0,
            range: u32::MAX,
            input,
            pos: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        if self.pos >= self.input.len() + IMPLICIT_ZEROS {
            return Err(Error::Decode("range decoder ran past the end of its segment".into()));
        }
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        Ok(b)
    }

    fn target(&mut self, bits: u32) -> (u32, u32) {
        let r = self.range >> bits;
        let t = (self.code / r).min((1u32 << bits) - 1);
        (r, t)
    }

    fn consume(&mut self, r: u32, start: u32, freq: u32) -> Result<()> {
        self.code = self
            .code
            .checked_sub(r * start)
            .ok_or_else(|| Error::Decode("corrupt range-coded data".into()))?;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte()? as u32;
        }
        Ok(())
    }

    pub fn decode_bits(&mut self, count: u32) -> Result<u32> {
        let mut value = 0u64;
        let mut done = 0;
        while done < count {
            let n = (count - done).min(RAW_CHUNK);
            let (r, t) = self.target(n);
            self.consume(r, t, 1)?;
            value |= (t as u64) << done;
            done += n;
        }
        Ok(value as u32)
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<i32> {
        let (r, t) = self.target(PRECISION);
        let s = table.find(t);
        let (start, freq) = table.range(s);
        self.consume(r, start, freq)?;
        if s != table.escape_symbol() {
            return Ok(table.value_of(s));
        }
        let len = self.decode_bits(ESCAPE_LEN_BITS)?;
        if len > 32 {
            return Err(Error::Decode(format!("escape length {len} exceeds 32 bits")));
        }
        Ok(unzigzag(self.decode_bits(len)?))
    }

    /// Checks the terminator and that every stored byte was consumed.
    pub fn finish(mut self) -> Result<()> {
        if self.decode_bits(16)? != TERMINATOR {
            return Err(Error::Decode("range-coded segment terminator mismatch".into()));
        }
        if self.pos != self.input.len() + IMPLICIT_ZEROS {
            return Err(Error::Decode(format!(
                "range-coded segment has {} bytes, decoder consumed {}",
                self.input.len(),
                self.pos - IMPLICIT_ZEROS
            )));
        }
        Ok(())
    }
}

fn zigzag(v: i32) -> u32 {
    ((v << 1) ^ (v >> 31)) as u32
}

fn unzigzag(z: u32) -> i32 {
    (z >> 1) as i32 ^ -((z & 1) as i32)
}

/// Codes `values[i]` with `tables[i]`.
pub fn range_encode(values: &[i32], tables: &[&CdfTable]) -> Result<Vec<u8>> {
    if values.len() != tables.len() {
        return Err(Error::usage(format!("{} values but {} tables", values.len(), tables.len())));
    }
    let mut enc = RangeEncoder::new();
    for (&v, t) in values.iter().zip(tables) {
        enc.encode(t, v);
    }
    Ok(enc.finish())
}

/// Decodes `tables.len()` values and validates the stream end.
pub fn range_decode(bytes: &[u8], tables: &[&CdfTable]) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let values = tables.iter().map(|t| dec.decode(t)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(values)
}
