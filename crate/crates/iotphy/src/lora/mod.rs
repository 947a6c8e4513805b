//! LoRa chirp-spread-spectrum PHY: modulator, demodulator, packet
//! framing, airtime model and the concurrent orthogonal-slope decoder.
//!
//! Data is modulated as cyclic shifts of a linear frequency sweep. A
//! symbol carries `sf` bits as one of `2^sf` shifts; the demodulator
//! multiplies the received chirp with a conjugate reference and finds
//! the resulting tone with an FFT.

mod demod;
pub mod harness;
mod modem;

pub use demod::{concurrent_decode, symbol_stream, ConcurrentOutcome, Demodulator, SyncInfo};
pub use modem::{chirp_gen, design_lowpass, fir_lowpass, modulate_frame, FIR_TAPS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoraError {
    #[error("spreading factor {0} outside [6, 12]")]
    InvalidSf(u8),
    #[error("bandwidth {0} Hz is not on the 7812.5 * 2^k grid up to 500 kHz")]
    InvalidBandwidth(f64),
    #[error("oversampling ratio must be >= 1")]
    InvalidOsr,
    #[error("coding rate denominator {0} outside {{4, 5, 6, 7, 8}}")]
    InvalidCodingRate(u8),
    #[error("symbol {symbol} out of range for SF{sf} (must be < {max})")]
    SymbolOutOfRange { symbol: u16, sf: u8, max: u32 },
    #[error("buffer length {got} does not match one symbol ({expected} samples)")]
    WrongSymbolLength { got: usize, expected: usize },
    #[error("byte count {n_bytes} inconsistent with {n_symbols} symbols of {sf} bits")]
    InconsistentByteCount {
        n_bytes: usize,
        n_symbols: usize,
        sf: u8,
    },
    #[error("FIR cutoff {cutoff_hz} Hz must be below Nyquist ({nyquist_hz} Hz)")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("no preamble found")]
    SyncNotFound,
    #[error("buffer sample rate {buffer_hz} Hz does not match configuration ({expected_hz} Hz)")]
    SampleRateMismatch { buffer_hz: u32, expected_hz: u32 },
}

/// Chirp sweep direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChirpDirection {
    Up,
    Down,
}

/// Full LoRa configuration governing modulation, demodulation and timing.
///
/// `sample_rate = bw_hz * osr`. A `coding_rate_denominator` of 4 means
/// uncoded airtime; 5 through 8 give rate 4/cr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraParams {
    pub sf: u8,
    pub bw_hz: f64,
    pub osr: u32,
    pub coding_rate_denominator: u8,
    pub preamble_len: u32,
    pub sync_symbols: [u16; 2],
    pub sfd_len_symbols: f64,
}

impl LoraParams {
    /// Standard configuration: 10-symbol preamble, zero sync symbols,
    /// 2.25-downchirp frame delimiter, uncoded.
    pub fn new(sf: u8, bw_hz: f64, osr: u32) -> Result<Self, LoraError> {
        let p = Self {
            sf,
            bw_hz,
            osr,
            coding_rate_denominator: 4,
            preamble_len: 10,
            sync_symbols: [0, 0],
            sfd_len_symbols: 2.25,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_coding_rate(mut self, cr: u8) -> Result<Self, LoraError> {
        self.coding_rate_denominator = cr;
        self.validate()?;
        Ok(self)
    }

    pub fn with_preamble_len(mut self, n: u32) -> Self {
        self.preamble_len = n;
        self
    }

    pub fn validate(&self) -> Result<(), LoraError> {
        if !(6..=12).contains(&self.sf) {
            return Err(LoraError::InvalidSf(self.sf));
        }
        // BW grid: 7812.5 * 2^k for k = 0..6 (7.8125 kHz up to 500 kHz)
        let on_grid = (0..=6).any(|k| {
            let grid = 7812.5 * f64::from(1u32 << k);
            (self.bw_hz - grid).abs() < 1e-6 * grid
        });
        if !on_grid {
            return Err(LoraError::InvalidBandwidth(self.bw_hz));
        }
        if self.osr < 1 {
            return Err(LoraError::InvalidOsr);
        }
        if !(4..=8).contains(&self.coding_rate_denominator) {
            return Err(LoraError::InvalidCodingRate(self.coding_rate_denominator));
        }
        Ok(())
    }

    /// Chips per symbol, `2^sf`.
    pub fn chips(&self) -> u32 {
        1 << self.sf
    }

    /// Samples per symbol, `2^sf * osr`.
    pub fn samples_per_symbol(&self) -> usize {
        (self.chips() * self.osr) as usize
    }

    pub fn sample_rate_hz(&self) -> u32 {
        (self.bw_hz * self.osr as f64).round() as u32
    }

    /// Symbol duration `2^sf / bw` in seconds.
    pub fn symbol_time_s(&self) -> f64 {
        self.chips() as f64 / self.bw_hz
    }

    pub fn slope(&self) -> ChirpSlope {
        ChirpSlope::of(self)
    }
}

/// Frequency sweep rate of a chirp, `bw^2 / 2^sf` in Hz per second.
/// Chirps with unequal slopes are quasi-orthogonal, which is what lets
/// concurrent transmissions share a channel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChirpSlope(pub f64);

impl ChirpSlope {
    pub fn of(params: &LoraParams) -> Self {
        Self(params.bw_hz * params.bw_hz / params.chips() as f64)
    }

    pub fn approx_eq(&self, other: &ChirpSlope) -> bool {
        (self.0 - other.0).abs() < 1e-6 * self.0.max(other.0)
    }
}

/// Payload symbols plus the configuration that frames them.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraFrame {
    pub symbols: Vec<u16>,
    pub params: LoraParams,
}

impl LoraFrame {
    pub fn new(symbols: Vec<u16>, params: LoraParams) -> Result<Self, LoraError> {
        let max = params.chips();
        for &s in &symbols {
            if u32::from(s) >= max {
                return Err(LoraError::SymbolOutOfRange {
                    symbol: s,
                    sf: params.sf,
                    max,
                });
            }
        }
        Ok(Self { symbols, params })
    }

    pub fn from_payload(payload: &[u8], params: LoraParams) -> Self {
        let symbols = pack_bits(payload, params.sf);
        Self { symbols, params }
    }
}

/// Per-symbol demodulation record for one decoded frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemodResult {
    pub symbols: Vec<u16>,
    pub fft_peak_magnitudes: Vec<f64>,
    pub chirp_directions: Vec<ChirpDirection>,
    pub start_offset_samples: usize,
    pub sync_values: [u16; 2],
    /// Samples left over after the last whole symbol (a truncated tail).
    pub dropped_tail_samples: usize,
}

/// Group a payload bitstream MSB-first into `sf`-bit symbols, zero-padded
/// at the tail.
pub fn pack_bits(payload: &[u8], sf: u8) -> Vec<u16> {
    let sf = sf as usize;
    let total_bits = payload.len() * 8;
    let n_symbols = total_bits.div_ceil(sf);
    let mut symbols = Vec::with_capacity(n_symbols);
    let bit = |i: usize| -> u16 {
        if i < total_bits {
            ((payload[i / 8] >> (7 - i % 8)) & 1) as u16
        } else {
            0
        }
    };
    for s in 0..n_symbols {
        let mut v = 0u16;
        for b in 0..sf {
            v = (v << 1) | bit(s * sf + b);
        }
        symbols.push(v);
    }
    symbols
}

/// Exact inverse of [`pack_bits`] when `n_bytes` matches the symbol count.
pub fn unpack_bits(symbols: &[u16], sf: u8, n_bytes: usize) -> Result<Vec<u8>, LoraError> {
    if (n_bytes * 8).div_ceil(sf as usize) != symbols.len() {
        return Err(LoraError::InconsistentByteCount {
            n_bytes,
            n_symbols: symbols.len(),
            sf,
        });
    }
    for &s in symbols {
        if u32::from(s) >= 1u32 << sf {
            return Err(LoraError::SymbolOutOfRange {
                symbol: s,
                sf,
                max: 1 << sf,
            });
        }
    }
    Ok(collect_bytes(symbols, sf, n_bytes))
}

/// Reassemble as many whole bytes as the symbols provide, without the
/// strict count check (used when decoding frames of unknown length).
pub(crate) fn collect_bytes(symbols: &[u16], sf: u8, n_bytes: usize) -> Vec<u8> {
    let sf = sf as usize;
    let mut out = vec![0u8; n_bytes];
    for i in 0..n_bytes * 8 {
        let sym = i / sf;
        let bit = (symbols[sym] >> (sf - 1 - i % sf)) & 1;
        out[i / 8] |= (bit as u8) << (7 - i % 8);
    }
    out
}

/// PHY data rate in bits per second: `sf * bw / 2^sf * (4 / cr)`.
pub fn data_rate(params: &LoraParams) -> f64 {
    let base = params.sf as f64 * params.bw_hz / params.chips() as f64;
    base * 4.0 / params.coding_rate_denominator as f64
}

/// Number of payload symbols for a payload of `payload_bytes` bytes.
pub fn payload_symbol_count(params: &LoraParams, payload_bytes: usize) -> usize {
    let cr = params.coding_rate_denominator as usize;
    (8 * payload_bytes * cr).div_ceil(4 * params.sf as usize)
}

/// On-air duration of a frame in seconds:
/// `(preamble + 2 sync + 2.25 SFD + payload symbols) * 2^sf / bw`.
pub fn airtime(params: &LoraParams, payload_bytes: usize) -> f64 {
    let n_payload = payload_symbol_count(params, payload_bytes) as f64;
    let n_total = params.preamble_len as f64 + 2.0 + params.sfd_len_symbols + n_payload;
    n_total * params.symbol_time_s()
}
