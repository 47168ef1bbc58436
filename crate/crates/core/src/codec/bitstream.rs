use crate::error::{Error, Result};

/// An ordered bit sequence backed by bytes, most significant bit first.
///
/// Bits past `len` in the final byte are always zero, so equal streams are
/// byte-equal and the byte view can be XORed against a cipher keystream
/// directly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitStream {
    bytes: Vec<u8>,
    len: usize,
}

impl BitStream {
    pub fn new() -> BitStream {
        BitStream::default()
    }

    pub fn with_capacity(bits: usize) -> BitStream {
        BitStream {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            len: 0,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> BitStream {
        let mut s = BitStream::new();
        for b in bits {
            s.push_bit(b);
        }
        s
    }

    /// Parses a string of '0' and '1' characters (test convenience).
    pub fn parse(s: &str) -> Result<BitStream> {
        let mut out = BitStream::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => out.push_bit(false),
                '1' => out.push_bit(true),
                _ => return Err(Error::Parameter(format!("not a bit: {c:?}"))),
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            let byte = self.len / 8;
            self.bytes[byte] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_uint(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for i in (0..width).rev() {
            self.push_bit((value >> i) & 1 == 1);
        }
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        if index >= self.len {
            return None;
        }
        Some(self.bytes[index / 8] & (0x80 >> (index % 8)) != 0)
    }

    /// Reads `width` bits starting at `start` as a big-endian integer.
    /// `None` when the stream is too short.
    pub fn read_uint(&self, start: usize, width: u32) -> Option<u64> {
        if width as usize > 64 || start.checked_add(width as usize)? > self.len {
            return None;
        }
        let mut v = 0u64;
        for i in 0..width as usize {
            v = (v << 1) | self.get(start + i).unwrap() as u64;
        }
        Some(v)
    }

    /// Concatenation: appends all of `other`.
    pub fn extend(&mut self, other: &BitStream) {
        for b in other.iter() {
            self.push_bit(b);
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> BitStream {
        assert!(start <= end && end <= self.len, "slice out of bounds");
        BitStream::from_bits((start..end).map(|i| self.get(i).unwrap()))
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i).unwrap())
    }

    /// The backing bytes; bits past `len` are zero.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// XOR with a byte-level keystream, truncated to this stream's bit
    /// length. Output length equals input length.
    pub fn xor_bytes(&self, keystream: &[u8]) -> BitStream {
        assert!(keystream.len() >= self.bytes.len(), "keystream too short");
        let mut bytes: Vec<u8> = self
            .bytes
            .iter()
            .zip(keystream)
            .map(|(a, b)| a ^ b)
            .collect();
        // Re-zero the tail so the canonical-padding invariant holds.
        if self.len % 8 != 0 {
            let keep = self.len % 8;
            let last = bytes.len() - 1;
            bytes[last] &= !(0xffu8 >> keep);
        }
        BitStream {
            bytes,
            len: self.len,
        }
    }
}

impl std::fmt::Display for BitStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> BitStream {
        BitStream::from_bits(iter)
    }
}
