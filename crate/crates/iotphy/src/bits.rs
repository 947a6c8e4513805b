//! A growable bit vector shared by the serial word codec and the BLE
//! packet assembler. Bits are addressable individually; byte packing is
//! MSB-first within each byte.

/// Bit sequence with explicit length, independent of byte alignment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitBuffer {
    bits: Vec<bool>,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self { bits: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            bits: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    /// Push the low `n` bits of `value`, most significant of those first.
    pub fn push_bits_msb(&mut self, value: u32, n: u32) {
        for i in (0..n).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    /// Push one byte least-significant bit first (serial LSB-first order).
    pub fn push_byte_lsb_first(&mut self, byte: u8) {
        for i in 0..8 {
            self.bits.push((byte >> i) & 1 == 1);
        }
    }

    pub fn extend(&mut self, other: &BitBuffer) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn insert(&mut self, index: usize, bit: bool) {
        self.bits.insert(index, bit);
    }

    pub fn remove(&mut self, index: usize) -> bool {
        self.bits.remove(index)
    }

    pub fn flip(&mut self, index: usize) {
        self.bits[index] = !self.bits[index];
    }

    /// Read `n` bits starting at `start` as an MSB-first integer.
    pub fn read_bits_msb(&self, start: usize, n: u32) -> u32 {
        let mut v = 0u32;
        for i in 0..n as usize {
            v = (v << 1) | self.bits[start + i] as u32;
        }
        v
    }

    /// Pack into bytes, MSB-first within each byte, zero-padded at the tail.
    pub fn to_bytes_msb_first(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    /// Interpret bytes as bits, MSB-first within each byte.
    pub fn from_bytes_msb_first(bytes: &[u8]) -> Self {
        let mut bits = Vec::with_capacity(bytes.len() * 8);
        for &byte in bytes {
            for i in (0..8).rev() {
                bits.push((byte >> i) & 1 == 1);
            }
        }
        Self { bits }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }
}

impl FromIterator<bool> for BitBuffer {
    fn from_iter<T: IntoIterator<Item = bool>>(iter: T) -> Self {
        Self {
            bits: iter.into_iter().collect(),
        }
    }
}
