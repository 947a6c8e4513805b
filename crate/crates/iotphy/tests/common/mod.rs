//! Test-side reference implementations, independent of the library's
//! computation paths: a brute-force correlation demodulator and
//! bit-level LFSR models for the BLE CRC and whitener.

use num_complex::Complex64;

use iotphy::lora::{chirp_gen, ChirpDirection, LoraParams};

/// All `2^sf` shifted reference chirps, conjugated, for the оracle.
pub struct CorrelationBank {
    references: Vec<Vec<Complex64>>,
}

impl CorrelationBank {
    pub fn new(params: &LoraParams) -> Self {
        let references = (0..params.chips())
            .map(|s| {
                chirp_gen(params, s as u16, ChirpDirection::Up)
                    .unwrap()
                    .samples
                    .iter()
                    .map(|c| c.conj())
                    .collect()
            })
            .collect();
        Self { references }
    }

    /// Argmax over correlations with every cyclic shift; ties resolve to
    /// the lowest shift (matching the detector's documented rule).
    pub fn demod(&self, window: &[Complex64]) -> (u16, f64) {
        let mut best = (0u16, f64::NEG_INFINITY);
        for (s, reference) in self.references.iter().enumerate() {
            let corr: Complex64 = window
                .iter()
                .zip(reference)
                .map(|(x, c)| x * c)
                .sum();
            let mag = corr.norm();
            if mag > best.1 {
                best = (s as u16, mag);
            }
        }
        best
    }
}

/// Bit-by-bit 24-position shift register for the advertising CRC:
/// polynomial x^24 + x^10 + x^9 + x^6 + x^4 + x^3 + x + 1, preset
/// 0x555555, input LSB first.
pub fn crc24_oracle(bytes: &[u8]) -> u32 {
    let mut reg = [false; 24];
    for (i, r) in reg.iter_mut().enumerate() {
        *r = (0x55_5555u32 >> i) & 1 == 1;
    }
    for &byte in bytes {
        for bit in 0..8 {
            let input = (byte >> bit) & 1 == 1;
            let feedback = input ^ reg[23];
            for i in (1..24).rev() {
                reg[i] = reg[i - 1];
            }
            reg[0] = feedback;
            if feedback {
                for tap in [1usize, 3, 4, 6, 9, 10] {
                    reg[tap] = !reg[tap];
                }
            }
        }
    }
    reg.iter()
        .enumerate()
        .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << i))
}

/// Bit-by-bit 7-position shift register for the whitener: polynomial
/// x^7 + x^4 + 1 seeded with the channel number's low 7 bits.
pub struct WhitenerOracle {
    reg: [bool; 7],
}

impl WhitenerOracle {
    pub fn new(channel: u8) -> Self {
        let mut reg = [false; 7];
        for (i, r) in reg.iter_mut().enumerate() {
            *r = (channel >> i) & 1 == 1;
        }
        Self { reg }
    }

    pub fn next_bit(&mut self) -> bool {
        let out = self.reg[6];
        for i in (1..7).rev() {
            self.reg[i] = self.reg[i - 1];
        }
        self.reg[0] = out;
        if out {
            self.reg[4] = !self.reg[4];
        }
        out
    }

    pub fn whiten(&mut self, bytes: &[u8]) -> Vec<u8> {
        bytes
            .iter()
            .map(|&byte| {
                let mut out = 0u8;
                for i in 0..8 {
                    let w = self.next_bit() as u8;
                    out |= (((byte >> i) & 1) ^ w) << i;
                }
                out
            })
            .collect()
    }
}
