//! FFT-based symbol detection, preamble search and frame demodulation.
//!
//! A received chirp multiplied by the conjugate of the zero-shift
//! reference collapses to a tone whose DFT bin is the symbol value. At
//! oversampling ratios above one the dechirped tone splits across two
//! spectral regions (the cyclic shift wraps mid-symbol), so the detector
//! takes the full-length FFT and combines the magnitudes of the two
//! alias bins `b` and `b + N*(osr-1)`; the matched symbol then scores
//! exactly `N*osr` at zero noise.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::iq::SampleBuffer;

use super::modem::{chirp_samples, fir_lowpass};
use super::{ChirpDirection, DemodResult, LoraError, LoraParams};

/// Result of locating a frame in a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncInfo {
    /// Index of the first payload sample.
    pub start_offset_samples: usize,
    /// The two sync-field symbol values read during acquisition.
    pub sync_values: [u16; 2],
    /// Index where the detected preamble begins (symbol-aligned).
    pub preamble_start_samples: usize,
}

#[derive(Debug, Clone, Copy)]
struct Detection {
    value: u16,
    magnitude: f64,
    median: f64,
}

/// Symbol demodulation pipeline for one configuration.
///
/// Holds the FFT plan, conjugate reference chirps and scratch buffers,
/// so it is cheap to call per symbol but not shareable across threads;
/// run independent instances concurrently instead.
pub struct Demodulator {
    params: LoraParams,
    fft: Arc<dyn Fft<f64>>,
    ref_up_conj: Vec<Complex64>,
    ref_down_conj: Vec<Complex64>,
    scratch: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
    mags: Vec<f64>,
    /// Preamble declaration threshold: peak >= factor * median bin magnitude.
    pub preamble_peak_factor: f64,
    /// Consecutive agreeing windows required to declare a preamble.
    pub preamble_run: usize,
}

impl Demodulator {
    pub fn new(params: LoraParams) -> Result<Self, LoraError> {
        params.validate()?;
        let m = params.samples_per_symbol();
        let fft = FftPlanner::new().plan_fft_forward(m);
        let fft_scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let conj = |dir| -> Vec<Complex64> {
            chirp_samples(&params, 0, dir).iter().map(|c| c.conj()).collect()
        };
        Ok(Self {
            ref_up_conj: conj(ChirpDirection::Up),
            ref_down_conj: conj(ChirpDirection::Down),
            scratch: vec![Complex64::default(); m],
            fft_scratch,
            mags: vec![0.0; params.chips() as usize],
            params,
            fft,
            preamble_peak_factor: 4.0,
            preamble_run: 4,
        })
    }

    pub fn params(&self) -> &LoraParams {
        &self.params
    }

    fn check_rate(&self, buf: &SampleBuffer) -> Result<(), LoraError> {
        let expected = self.params.sample_rate_hz();
        if buf.sample_rate_hz != expected {
            return Err(LoraError::SampleRateMismatch {
                buffer_hz: buf.sample_rate_hz,
                expected_hz: expected,
            });
        }
        Ok(())
    }

    fn detect(&mut self, window: &[Complex64], reference: ChirpDirection) -> Result<Detection, LoraError> {
        let m = self.params.samples_per_symbol();
        if window.len() != m {
            return Err(LoraError::WrongSymbolLength {
                got: window.len(),
                expected: m,
            });
        }
        let reference = match reference {
            ChirpDirection::Up => &self.ref_up_conj,
            ChirpDirection::Down => &self.ref_down_conj,
        };
        for (dst, (w, r)) in self.scratch.iter_mut().zip(window.iter().zip(reference)) {
            *dst = w * r;
        }
        self.fft.process_with_scratch(&mut self.scratch, &mut self.fft_scratch);

        let n = self.params.chips() as usize;
        let osr = self.params.osr as usize;
        let mut best_bin = 0usize;
        let mut best_mag = f64::NEG_INFINITY;
        for b in 0..n {
            let mut mag = self.scratch[b].norm();
            if osr > 1 {
                mag += self.scratch[b + n * (osr - 1)].norm();
            }
            self.mags[b] = mag;
            if mag > best_mag {
                best_mag = mag;
                best_bin = b;
            }
        }
        let mut sorted = self.mags.clone();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Detection {
            value: best_bin as u16,
            magnitude: best_mag,
            median: sorted[n / 2],
        })
    }

    /// Demodulate one symbol-length window against the given reference
    /// direction: returns the winning bin and its peak magnitude. Ties
    /// resolve to the lowest bin index.
    pub fn demod_symbol(
        &mut self,
        window: &[Complex64],
        reference: ChirpDirection,
    ) -> Result<(u16, f64), LoraError> {
        let det = self.detect(window, reference)?;
        Ok((det.value, det.magnitude))
    }

    /// Classify a symbol-length window as upchirp or downchirp by
    /// comparing the FFT peaks against both references; the higher peak
    /// indicates the chirp type. An exact tie resolves as up.
    pub fn detect_chirp_direction(&mut self, window: &[Complex64]) -> Result<ChirpDirection, LoraError> {
        let up = self.detect(window, ChirpDirection::Up)?;
        let down = self.detect(window, ChirpDirection::Down)?;
        Ok(if down.magnitude > up.magnitude {
            ChirpDirection::Down
        } else {
            ChirpDirection::Up
        })
    }

    /// Locate a frame: slide a symbol-length window in chip steps and
    /// declare a preamble when enough consecutive windows agree (above
    /// threshold) on the same implied symbol-aligned start; refine the
    /// timing so the preamble reads bin zero, then confirm the frame
    /// delimiter by the chirp direction flipping to down.
    pub fn packet_sync(&mut self, buf: &SampleBuffer) -> Result<SyncInfo, LoraError> {
        self.check_rate(buf)?;
        let m = self.params.samples_per_symbol();
        let osr = self.params.osr as usize;
        if buf.len() < m {
            return Err(LoraError::SyncNotFound);
        }

        let mut run_len = 0usize;
        let mut run_candidate = 0i64;
        let n_positions = (buf.len() - m) / osr + 1;
        for ci in 0..n_positions {
            let p = ci * osr;
            let det = self.detect(&buf.samples[p..p + m], ChirpDirection::Up)?;
            let above = det.magnitude > 0.0
                && det.magnitude >= self.preamble_peak_factor * det.median;
            let candidate = p as i64 - det.value as i64 * osr as i64;
            if above && run_len > 0 && candidate == run_candidate {
                run_len += 1;
            } else if above {
                run_candidate = candidate;
                run_len = 1;
            } else {
                run_len = 0;
            }
            if run_len >= self.preamble_run {
                if let Some(info) = self.confirm_frame(buf, run_candidate)? {
                    return Ok(info);
                }
                run_len = 0;
            }
        }
        Err(LoraError::SyncNotFound)
    }

    /// From a symbol-aligned candidate start, refine sub-chip timing and
    /// walk forward to the SFD. Returns None if the structure does not
    /// check out (keeps the scan going).
    fn confirm_frame(
        &mut self,
        buf: &SampleBuffer,
        candidate_start: i64,
    ) -> Result<Option<SyncInfo>, LoraError> {
        let m = self.params.samples_per_symbol() as i64;
        let osr = self.params.osr as i64;
        let len = buf.len() as i64;

        let mut t0 = candidate_start;
        while t0 < 0 {
            t0 += m;
        }

        // fine timing: nudge within one chip either way for the strongest
        // thresholded bin-0 response. Windows straddling a silence-to-
        // preamble boundary vote a ghost start one symbol early, so when
        // nothing at t0 looks like a preamble symbol, advance and retry.
        let mut refined: Option<i64> = None;
        'attempt: for shift in 0..3 {
            let base = t0 + shift * m;
            let mut best: (i64, f64) = (0, f64::NEG_INFINITY);
            for delta in -osr..=osr {
                let q = base + delta;
                if q < 0 || q + m > len {
                    continue;
                }
                let det =
                    self.detect(&buf.samples[q as usize..(q + m) as usize], ChirpDirection::Up)?;
                let above = det.magnitude > 0.0
                    && det.magnitude >= self.preamble_peak_factor * det.median;
                if det.value == 0 && above && det.magnitude > best.1 {
                    best = (q, det.magnitude);
                }
            }
            if best.1.is_finite() {
                refined = Some(best.0);
                break 'attempt;
            }
        }
        let Some(preamble_start) = refined else {
            return Ok(None);
        };

        // walk whole symbols until the chirp direction flips to down
        let max_walk = self.params.preamble_len as usize + 8;
        let mut pos = preamble_start;
        let mut up_values: Vec<u16> = Vec::new();
        for _ in 0..max_walk {
            if pos + m > len {
                return Ok(None);
            }
            let window = &buf.samples[pos as usize..(pos + m) as usize];
            if self.detect_chirp_direction(window)? == ChirpDirection::Down {
                if up_values.len() < 2 {
                    return Ok(None);
                }
                let payload_start = pos + (self.params.sfd_len_symbols * m as f64).round() as i64;
                if payload_start < 0 {
                    return Ok(None);
                }
                return Ok(Some(SyncInfo {
                    start_offset_samples: payload_start as usize,
                    sync_values: [up_values[up_values.len() - 2], up_values[up_values.len() - 1]],
                    preamble_start_samples: preamble_start as usize,
                }));
            }
            let det = self.detect(window, ChirpDirection::Up)?;
            up_values.push(det.value);
            pos += m;
        }
        Ok(None)
    }

    /// Run the whole receive pipeline: low-pass (when oversampled),
    /// preamble search, then per-symbol detection to the end of the
    /// buffer. Partial trailing symbols are dropped and reported.
    pub fn demodulate_frame(&mut self, buf: &SampleBuffer) -> Result<(DemodResult, Vec<u8>), LoraError> {
        self.check_rate(buf)?;
        let filtered;
        let work = if self.params.osr >= 2 {
            filtered = fir_lowpass(buf, 0.5 * self.params.bw_hz)?;
            &filtered
        } else {
            buf
        };

        let sync = self.packet_sync(work)?;
        let m = self.params.samples_per_symbol();
        let mut symbols = Vec::new();
        let mut magnitudes = Vec::new();
        let mut directions = Vec::new();
        let mut pos = sync.start_offset_samples;
        while pos + m <= work.len() {
            let window = &work.samples[pos..pos + m];
            let up = self.detect(window, ChirpDirection::Up)?;
            let down = self.detect(window, ChirpDirection::Down)?;
            symbols.push(up.value);
            magnitudes.push(up.magnitude);
            directions.push(if down.magnitude > up.magnitude {
                ChirpDirection::Down
            } else {
                ChirpDirection::Up
            });
            pos += m;
        }
        let dropped_tail_samples = work.len() - pos;

        let n_bytes = symbols.len() * self.params.sf as usize / 8;
        let bytes = super::collect_bytes(&symbols, self.params.sf, n_bytes);
        Ok((
            DemodResult {
                symbols,
                fft_peak_magnitudes: magnitudes,
                chirp_directions: directions,
                start_offset_samples: sync.start_offset_samples,
                sync_values: sync.sync_values,
                dropped_tail_samples,
            },
            bytes,
        ))
    }
}

/// Outcome of one configuration within a concurrent decode.
#[derive(Debug)]
pub struct ConcurrentOutcome {
    pub params: LoraParams,
    pub result: Result<(DemodResult, Vec<u8>), LoraError>,
    /// Indices of other configurations sharing this one's chirp slope;
    /// equal slopes are not orthogonal and will interfere.
    pub non_orthogonal_with: Vec<usize>,
}

/// Run the full demodulation pipeline once per configuration over the
/// same buffer. All configurations must match the buffer's sample rate;
/// configurations with identical chirp slopes are flagged.
pub fn concurrent_decode(buf: &SampleBuffer, params_list: &[LoraParams]) -> Vec<ConcurrentOutcome> {
    params_list
        .iter()
        .enumerate()
        .map(|(i, params)| {
            let non_orthogonal_with = params_list
                .iter()
                .enumerate()
                .filter(|&(j, other)| j != i && params.slope().approx_eq(&other.slope()))
                .map(|(j, _)| j)
                .collect();
            let result = Demodulator::new(params.clone())
                .and_then(|mut d| d.demodulate_frame(buf));
            ConcurrentOutcome {
                params: params.clone(),
                result,
                non_orthogonal_with,
            }
        })
        .collect()
}

/// Concatenate bare chirp symbols (no preamble or delimiter); the
/// symbol-aligned stream the concurrent-reception study transmits.
pub fn symbol_stream(params: &LoraParams, symbols: &[u16]) -> Result<SampleBuffer, LoraError> {
    let mut samples = Vec::with_capacity(symbols.len() * params.samples_per_symbol());
    for &s in symbols {
        if u32::from(s) >= params.chips() {
            return Err(LoraError::SymbolOutOfRange {
                symbol: s,
                sf: params.sf,
                max: params.chips(),
            });
        }
        samples.extend_from_slice(&chirp_samples(params, s, ChirpDirection::Up));
    }
    Ok(SampleBuffer::new(samples, params.sample_rate_hz()))
}
