//! Packed bit strings with MSB-first byte serialization.

use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// An exact-length sequence of bits, packed MSB-first.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().expect("byte allocated above");
            *last |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0);
        for k in (0..width).rev() {
            self.push((value >> k) & 1 == 1);
        }
    }

    pub fn extend(&mut self, other: &BitString) {
        for bit in other.iter() {
            self.push(bit);
        }
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }

    /// Packed bytes; trailing pad bits of the last byte are zero.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 || bytes.len() != len.div_ceil(8) {
            return Err(Error::Format(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let mut bytes = bytes.to_vec();
        if len % 8 != 0 {
            let last = bytes.last_mut().expect("len > 0");
            *last &= 0xffu8 << (8 - len % 8);
        }
        Ok(Self { bytes, len })
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for c in text.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                _ => return Err(Error::Format(format!("not a bit: {c:?}"))),
            }
        }
        Ok(out)
    }

    /// Writes a 64-bit big-endian bit count followed by the packed bytes.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.len as u64).to_be_bytes())?;
        w.write_all(&self.bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let len = usize::try_from(u64::from_be_bytes(header))
            .map_err(|_| Error::Format("bit count overflows usize".into()))?;
        let mut bytes = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bytes)?;
        Self::from_bytes(&bytes, len)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.iter() {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut out = Self::new();
        for bit in iter {
            out.push(bit);
        }
        out
    }
}

/// Cursor over a [`BitString`].
pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl BitReader<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let bit = self
            .bits
            .get(self.pos)
            .ok_or(Error::Truncated { consumed: self.pos })?;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        debug_assert!(width <= 64);
        if self.remaining() < width as usize {
            return Err(Error::Truncated {
                consumed: self.bits.len,
            });
        }
        let mut value = 0u64;
        for _ in 0..width {
            value = (value << 1) | self.read_bit()? as u64;
        }
        Ok(value)
    }
}

/// `ceil(log2 x)` for `x >= 1`; zero for `x == 1`.
pub fn ceil_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// `floor(log2 x)` for `x >= 1`.
pub fn floor_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    63 - x.leading_zeros()
}
