//! Chirp synthesis, frame modulation and the receive low-pass filter.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::iq::SampleBuffer;

use super::{ChirpDirection, LoraError, LoraFrame, LoraParams};

/// Number of taps in the receive low-pass FIR.
pub const FIR_TAPS: usize = 14;

/// Generate one chirp symbol with a phase accumulator.
///
/// The instantaneous frequency at chip `k` of an upchirp with cyclic
/// shift `s` is `((k + s) mod 2^sf) / 2^sf * bw - bw/2`; each chip spans
/// `osr` samples and the phase is the running sum of `2*pi*f/fs`
/// starting at zero. Downchirps negate the frequency trajectory.
pub fn chirp_gen(
    params: &LoraParams,
    symbol: u16,
    direction: ChirpDirection,
) -> Result<SampleBuffer, LoraError> {
    let n_chips = params.chips();
    if u32::from(symbol) >= n_chips {
        return Err(LoraError::SymbolOutOfRange {
            symbol,
            sf: params.sf,
            max: n_chips,
        });
    }
    Ok(SampleBuffer::new(
        chirp_samples(params, symbol, direction),
        params.sample_rate_hz(),
    ))
}

pub(crate) fn chirp_samples(
    params: &LoraParams,
    symbol: u16,
    direction: ChirpDirection,
) -> Vec<Complex64> {
    let n_chips = params.chips() as u64;
    let osr = params.osr as u64;
    let n = (n_chips * osr) as usize;
    let fs = params.bw_hz * params.osr as f64;
    let sign = match direction {
        ChirpDirection::Up => 1.0,
        ChirpDirection::Down => -1.0,
    };

    let mut out = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for j in 0..n as u64 {
        out.push(Complex64::from_polar(1.0, phase));
        let k = j / osr;
        let f = ((k + symbol as u64) % n_chips) as f64 / n_chips as f64 * params.bw_hz
            - params.bw_hz / 2.0;
        phase = (phase + sign * TAU * f / fs) % TAU;
    }
    out
}

/// Modulate a frame: `preamble_len` zero-shift upchirps, two sync
/// upchirps, the 2.25-downchirp delimiter (quarter chirp rounded to the
/// nearest sample), then one upchirp per payload symbol.
pub fn modulate_frame(frame: &LoraFrame) -> Result<SampleBuffer, LoraError> {
    let p = &frame.params;
    p.validate()?;
    let n = p.samples_per_symbol();
    let n_total = (p.preamble_len as f64 + 2.0 + p.sfd_len_symbols) * n as f64;
    let mut samples = Vec::with_capacity(n_total.ceil() as usize + frame.symbols.len() * n);

    let base_up = chirp_samples(p, 0, ChirpDirection::Up);
    for _ in 0..p.preamble_len {
        samples.extend_from_slice(&base_up);
    }
    for &sync in &p.sync_symbols {
        if u32::from(sync) >= p.chips() {
            return Err(LoraError::SymbolOutOfRange {
                symbol: sync,
                sf: p.sf,
                max: p.chips(),
            });
        }
        samples.extend_from_slice(&chirp_samples(p, sync, ChirpDirection::Up));
    }
    let base_down = chirp_samples(p, 0, ChirpDirection::Down);
    let full_sfd = p.sfd_len_symbols.floor() as usize;
    for _ in 0..full_sfd {
        samples.extend_from_slice(&base_down);
    }
    let quarter = ((p.sfd_len_symbols - full_sfd as f64) * n as f64).round() as usize;
    samples.extend_from_slice(&base_down[..quarter]);

    for &sym in &frame.symbols {
        if u32::from(sym) >= p.chips() {
            return Err(LoraError::SymbolOutOfRange {
                symbol: sym,
                sf: p.sf,
                max: p.chips(),
            });
        }
        samples.extend_from_slice(&chirp_samples(p, sym, ChirpDirection::Up));
    }

    Ok(SampleBuffer::new(samples, p.sample_rate_hz()))
}

/// Design the 14-tap Hamming-windowed sinc low-pass for the given cutoff.
pub fn design_lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<[f64; FIR_TAPS], LoraError> {
    if cutoff_hz >= sample_rate_hz / 2.0 || cutoff_hz <= 0.0 {
        return Err(LoraError::CutoffAboveNyquist {
            cutoff_hz,
            nyquist_hz: sample_rate_hz / 2.0,
        });
    }
    let fc = cutoff_hz / sample_rate_hz;
    let mut taps = [0.0f64; FIR_TAPS];
    let center = (FIR_TAPS - 1) as f64 / 2.0;
    for (k, tap) in taps.iter_mut().enumerate() {
        let x = 2.0 * fc * (k as f64 - center);
        let sinc = if x == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        let window = 0.54 - 0.46 * (TAU * k as f64 / (FIR_TAPS - 1) as f64).cos();
        *tap = 2.0 * fc * sinc * window;
    }
    let sum: f64 = taps.iter().sum();
    for tap in &mut taps {
        *tap /= sum; // unity DC gain
    }
    Ok(taps)
}

/// Apply the 14-tap low-pass by convolution. Output length equals input
/// length; the 6.5-sample group delay is compensated with reflected edge
/// padding.
pub fn fir_lowpass(buf: &SampleBuffer, cutoff_hz: f64) -> Result<SampleBuffer, LoraError> {
    let taps = design_lowpass(cutoff_hz, buf.sample_rate_hz as f64)?;
    Ok(SampleBuffer::new(
        convolve_same(&buf.samples, &taps),
        buf.sample_rate_hz,
    ))
}

pub(crate) fn convolve_same(x: &[Complex64], taps: &[f64; FIR_TAPS]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    // reflect indices outside [0, n): -1 -> 1, n -> n - 2
    let fetch = |i: isize| -> Complex64 {
        let m = if i < 0 {
            (-i) as usize % (2 * n.max(1))
        } else if i as usize >= n {
            let over = i as usize - (n - 1);
            n - 1 - (over % n.max(1))
        } else {
            return x[i as usize];
        };
        x[m.min(n - 1)]
    };
    let delay = (FIR_TAPS / 2) as isize; // ceil of the 6.5-sample group delay
    (0..n as isize)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &h) in taps.iter().enumerate() {
                acc += h * fetch(i + delay - k as isize);
            }
            acc
        })
        .collect()
}
