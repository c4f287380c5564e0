//! MSB-first bit writer/reader with order-0 exp-Golomb codes.

use super::CodecError;

/// Largest value the readers accept for a `ue` code (32 leading zeros).
const MAX_UE_PREFIX: u32 = 32;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bits written so far, excluding any padding.
    pub fn bit_len(&self) -> u64 {
        self.len
    }

    pub fn put_bit(&mut self, bit: bool) {
        let used = (self.len % 8) as u32;
        if used == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> used;
        }
        self.len += 1;
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn put_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for i in (0..n).rev() {
            self.put_bit((value >> i) & 1 == 1);
        }
    }

    pub fn put_ue(&mut self, v: u64) {
        let coded = v as u128 + 1;
        let width = 128 - coded.leading_zeros();
        for _ in 1..width {
            self.put_bit(false);
        }
        for i in (0..width).rev() {
            self.put_bit((coded >> i) & 1 == 1);
        }
    }

    pub fn put_se(&mut self, v: i64) {
        self.put_ue(signed_to_unsigned(v));
    }

    pub fn append(&mut self, other: &BitWriter) {
        if self.len.is_multiple_of(8) {
            self.bytes.extend_from_slice(&other.bytes);
            self.len += other.len;
            return;
        }
        let mut r = BitReader::new(&other.bytes, other.len);
        while let Ok(b) = r.get_bit() {
            self.put_bit(b);
        }
    }

    /// Pads with zero bits to a byte boundary; returns the bytes and the pad count.
    pub fn finish(self) -> (Vec<u8>, u8) {
        let pad = ((8 - self.len % 8) % 8) as u8;
        (self.bytes, pad)
    }

    pub fn to_bit_string(&self) -> String {
        let mut r = BitReader::new(&self.bytes, self.len);
        let mut s = String::with_capacity(self.len as usize);
        while let Ok(b) = r.get_bit() {
            s.push(if b { '1' } else { '0' });
        }
        s
    }
}

pub fn signed_to_unsigned(v: i64) -> u64 {
    if v > 0 {
        2 * v as u64 - 1
    } else {
        2 * v.unsigned_abs()
    }
}

pub fn unsigned_to_signed(u: u64) -> i64 {
    if u % 2 == 1 {
        u.div_ceil(2) as i64
    } else {
        -((u / 2) as i64)
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    /// Reads at most `limit` bits of `data`.
    pub fn new(data: &'a [u8], limit: u64) -> Self {
        Self {
            data,
            pos: 0,
            limit: limit.min(data.len() as u64 * 8),
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.pos
    }

    pub fn get_bit(&mut self) -> Result<bool, CodecError> {
        if self.pos >= self.limit {
            return Err(CodecError::TruncatedStream);
        }
        let byte = self.data[(self.pos / 8) as usize];
        let bit = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn get_bits(&mut self, n: u32) -> Result<u64, CodecError> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.get_bit()? as u64;
        }
        Ok(v)
    }

    pub fn get_ue(&mut self) -> Result<u64, CodecError> {
        let mut zeros = 0;
        while !self.get_bit()? {
            zeros += 1;
            if zeros > MAX_UE_PREFIX {
                return Err(CodecError::CorruptPayload("exp-Golomb prefix too long".into()));
            }
        }
        let rest = self.get_bits(zeros)?;
        Ok(((1u64 << zeros) | rest) - 1)
    }

    pub fn get_se(&mut self) -> Result<i64, CodecError> {
        Ok(unsigned_to_signed(self.get_ue()?))
    }
}
