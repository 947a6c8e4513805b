//! Monte-Carlo error-rate harnesses shared by the CLI sweeps and the
//! verification suites. Each call is deterministic in its seed;
//! independent SNR points parallelize at the caller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{awgn, awgn_with_noise_power, combine};
use crate::lora::{
    chirp_gen, symbol_stream, ChirpDirection, Demodulator, LoraError, LoraParams,
};

/// Count symbol errors for `trials` random symbols at one SNR (dB over
/// the sampled band).
pub fn lora_symbol_errors(params: &LoraParams, snr_db: f64, trials: usize, seed: u64) -> usize {
    let mut demod = Demodulator::new(params.clone()).expect("validated params");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.chips();
    let mut errors = 0;
    for i in 0..trials {
        let sym = rng.random_range(0..n) as u16;
        let clean = chirp_gen(params, sym, ChirpDirection::Up).expect("symbol in range");
        let noisy = awgn(&clean, snr_db, seed ^ (i as u64).wrapping_mul(0x9E37_79B9))
            .expect("non-empty buffer");
        let (got, _) = demod
            .demod_symbol(&noisy.samples, ChirpDirection::Up)
            .expect("window length matches");
        if got != sym {
            errors += 1;
        }
    }
    errors
}

/// Per-stream symbol errors for two concurrent symbol-aligned streams
/// plus unit-power noise. Each stream's amplitude is set so its SNR
/// against the noise is `snr_*_db`; stream B runs for the same duration
/// as stream A. Returns `[(errors, trials); 2]`.
pub fn concurrent_symbol_errors(
    params_a: &LoraParams,
    params_b: &LoraParams,
    snr_a_db: f64,
    snr_b_db: f64,
    trials_a: usize,
    seed: u64,
) -> Result<[(usize, usize); 2], LoraError> {
    if params_a.sample_rate_hz() != params_b.sample_rate_hz() {
        return Err(LoraError::SampleRateMismatch {
            buffer_hz: params_b.sample_rate_hz(),
            expected_hz: params_a.sample_rate_hz(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len_a = params_a.samples_per_symbol();
    let len_b = params_b.samples_per_symbol();
    let total = trials_a * len_a;
    let trials_b = total / len_b;

    let syms_a: Vec<u16> = (0..trials_a)
        .map(|_| rng.random_range(0..params_a.chips()) as u16)
        .collect();
    let syms_b: Vec<u16> = (0..trials_b)
        .map(|_| rng.random_range(0..params_b.chips()) as u16)
        .collect();
    let stream_a = symbol_stream(params_a, &syms_a)?;
    let stream_b = symbol_stream(params_b, &syms_b)?;

    let mixed = combine(&[(&stream_a, snr_a_db, 0), (&stream_b, snr_b_db, 0)])
        .expect("matching sample rates");
    let noisy = awgn_with_noise_power(&mixed, 1.0, seed ^ 0x00C0_FFEE);

    let mut out = [(0usize, trials_a), (0usize, trials_b)];
    for (idx, (params, syms, sym_len)) in [
        (params_a, &syms_a, len_a),
        (params_b, &syms_b, len_b),
    ]
    .into_iter()
    .enumerate()
    {
        let mut demod = Demodulator::new(params.clone())?;
        let mut errors = 0;
        for (i, &sym) in syms.iter().enumerate() {
            let window = &noisy.samples[i * sym_len..(i + 1) * sym_len];
            let (got, _) = demod.demod_symbol(window, ChirpDirection::Up)?;
            if got != sym {
                errors += 1;
            }
        }
        out[idx].0 = errors;
    }
    Ok(out)
}

/// Count bit errors through the GFSK modulator/discriminator at one SNR.
pub fn gfsk_bit_errors(
    cfg: &crate::ble::GfskConfig,
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..trials).map(|_| rng.random()).collect();
    let tx = crate::ble::gfsk_modulate(&bits, cfg).expect("validated config");
    let noisy = awgn(&tx, snr_db, seed ^ 0x5EED).expect("non-empty buffer");
    let got = crate::ble::gfsk_demodulate(&noisy, cfg).expect("validated config");
    bits.iter().zip(&got).filter(|(a, b)| a != b).count()
}

/// Locate the SNR at which an error-rate curve crosses `target`, by
/// bracketing in `coarse_step` dB strides and log-linear interpolation
/// between the bracketing points measured at full depth.
///
/// `measure(snr_db, trials)` returns the error count out of `trials`.
pub fn find_snr_threshold(
    measure: &dyn Fn(f64, usize) -> usize,
    target: f64,
    start_snr_db: f64,
    coarse_step_db: f64,
    coarse_trials: usize,
    refine_trials: usize,
) -> f64 {
    // walk down (or up) until the target is bracketed
    let rate = |snr: f64, trials: usize| measure(snr, trials) as f64 / trials as f64;
    let mut hi = start_snr_db; // high SNR side (error rate below target)
    let mut guard = 0;
    while rate(hi, coarse_trials) > target {
        hi += coarse_step_db;
        guard += 1;
        assert!(guard < 100, "threshold search ran away upward");
    }
    let mut lo = hi - coarse_step_db;
    while rate(lo, coarse_trials) < target {
        hi = lo;
        lo -= coarse_step_db;
        guard += 1;
        assert!(guard < 100, "threshold search ran away downward");
    }

    // refine: log-linear interpolation between the bracketing points
    let floor = 0.5 / refine_trials as f64;
    let r_lo = rate(lo, refine_trials).max(floor);
    let r_hi = rate(hi, refine_trials).max(floor);
    if (r_lo - r_hi).abs() < f64::EPSILON {
        return (lo + hi) / 2.0;
    }
    let t = (target.ln() - r_lo.ln()) / (r_hi.ln() - r_lo.ln());
    lo + t.clamp(0.0, 1.0) * (hi - lo)
}
