//! GFSK baseband synthesis and a discriminator receiver for self-test.
//!
//! Bits map to a +/-1 NRZ waveform held for `osr` samples, smoothed by a
//! Gaussian pulse, then frequency-modulated through a phase accumulator:
//! f = h/2 * bit_rate * filtered, phase = running sum of 2*pi*f/fs.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::iq::SampleBuffer;

use super::BleError;

/// GFSK modulation parameters. The 1 Mbps rate with modulation index
/// 0.5 and BT 0.5 is the advertising default; 2 Mbps is reachable via
/// `bit_rate_bps` alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfskConfig {
    pub bit_rate_bps: f64,
    pub modulation_index: f64,
    pub gaussian_bt: f64,
    /// Samples per bit, >= 2.
    pub osr: u32,
}

impl Default for GfskConfig {
    fn default() -> Self {
        Self {
            bit_rate_bps: 1e6,
            modulation_index: 0.5,
            gaussian_bt: 0.5,
            osr: 8,
        }
    }
}

impl GfskConfig {
    pub fn validate(&self) -> Result<(), BleError> {
        if self.osr < 2 {
            return Err(BleError::InvalidOsr);
        }
        if !(0.45..=0.55).contains(&self.modulation_index) {
            return Err(BleError::InvalidModulationIndex(self.modulation_index));
        }
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> u32 {
        (self.bit_rate_bps * self.osr as f64).round() as u32
    }
}

/// Gaussian pulse taps truncated to 4 bit periods, unity DC gain so a
/// long run of equal bits settles the filtered waveform at exactly +/-1.
fn gaussian_taps(cfg: &GfskConfig) -> Vec<f64> {
    let osr = cfg.osr as usize;
    let span_bits = 4usize;
    let len = span_bits * osr + 1;
    // standard Gaussian filter: sigma_t = sqrt(ln 2) / (2*pi*B), B = BT/Tbit
    let sigma_samples = (2f64.ln()).sqrt() / (TAU * cfg.gaussian_bt) * osr as f64;
    let center = (len - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 - center;
            (-t * t / (2.0 * sigma_samples * sigma_samples)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Synthesize the constant-envelope GFSK waveform for a bit sequence.
pub fn gfsk_modulate(bits: &[bool], cfg: &GfskConfig) -> Result<SampleBuffer, BleError> {
    cfg.validate()?;
    let osr = cfg.osr as usize;
    let fs = cfg.bit_rate_bps * cfg.osr as f64;
    let taps = gaussian_taps(cfg);
    let half = taps.len() / 2;

    // NRZ hold, edge-extended so the filter settles at both ends
    let n = bits.len() * osr;
    let nrz = |i: isize| -> f64 {
        if bits.is_empty() {
            return 0.0;
        }
        let idx = (i.clamp(0, n as isize - 1)) as usize / osr;
        if bits[idx] {
            1.0
        } else {
            -1.0
        }
    };

    let dev = cfg.modulation_index * cfg.bit_rate_bps / 2.0;
    let mut samples = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for i in 0..n as isize {
        let mut filtered = 0.0;
        for (k, &h) in taps.iter().enumerate() {
            filtered += h * nrz(i + half as isize - k as isize);
        }
        samples.push(Complex64::from_polar(1.0, phase));
        phase = (phase + TAU * dev * filtered / fs) % TAU;
    }
    Ok(SampleBuffer::new(samples, cfg.sample_rate_hz()))
}

/// Discriminator receiver: per-sample phase difference, integrate and
/// dump over each bit period, sign decision. Assumes the buffer is
/// aligned to bit boundaries (self-test usage).
pub fn gfsk_demodulate(buf: &SampleBuffer, cfg: &GfskConfig) -> Result<Vec<bool>, BleError> {
    cfg.validate()?;
    let osr = cfg.osr as usize;
    let n_bits = buf.len() / osr;
    let mut bits = Vec::with_capacity(n_bits);
    for b in 0..n_bits {
        let mut acc = 0.0;
        for i in b * osr..(b + 1) * osr {
            let prev = if i == 0 { buf.samples[0] } else { buf.samples[i - 1] };
            acc += (buf.samples[i] * prev.conj()).arg();
        }
        bits.push(acc >= 0.0);
    }
    Ok(bits)
}
