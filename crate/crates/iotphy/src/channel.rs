//! Baseband channel impairments for PHY tests and a packet-level
//! erasure channel for protocol simulation. Every stochastic operation
//! takes an explicit seed and is bit-reproducible.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use thiserror::Error;

use crate::iq::SampleBuffer;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("buffer must be non-empty")]
    EmptyBuffer,
    #[error("sources have mismatched sample rates ({0} Hz vs {1} Hz)")]
    SampleRateMismatch(u32, u32),
    #[error("loss probability {0} outside [0, 1]")]
    InvalidLossProbability(f64),
}

/// Add circularly-symmetric white Gaussian noise at the requested SNR.
///
/// The SNR is defined over the full sampled band: noise variance equals
/// the buffer's mean power divided by `10^(snr_db/10)`, split equally
/// across I and Q. `snr_db = f64::INFINITY` returns the buffer unchanged.
pub fn awgn(buf: &SampleBuffer, snr_db: f64, seed: u64) -> Result<SampleBuffer, ChannelError> {
    if buf.is_empty() {
        return Err(ChannelError::EmptyBuffer);
    }
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(buf.clone());
    }
    let noise_power = buf.mean_power() / 10f64.powf(snr_db / 10.0);
    Ok(awgn_with_noise_power(buf, noise_power, seed))
}

/// Add noise of a given absolute power (per complex sample) rather than
/// relative to the signal; used when several signals share one channel.
pub fn awgn_with_noise_power(buf: &SampleBuffer, noise_power: f64, seed: u64) -> SampleBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (noise_power / 2.0).sqrt()).unwrap();
    let samples = buf
        .samples
        .iter()
        .map(|s| s + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    SampleBuffer::new(samples, buf.sample_rate_hz)
}

/// One input to [`combine`]: a buffer, a gain in dB and a delay in samples.
pub type CombineSource<'a> = (&'a SampleBuffer, f64, usize);

/// Sum delayed, scaled sources as a power combiner would. The output is
/// as long as the latest-ending source.
pub fn combine(sources: &[CombineSource]) -> Result<SampleBuffer, ChannelError> {
    if sources.is_empty() {
        return Err(ChannelError::EmptyBuffer);
    }
    let rate = sources[0].0.sample_rate_hz;
    for (buf, _, _) in sources {
        if buf.sample_rate_hz != rate {
            return Err(ChannelError::SampleRateMismatch(rate, buf.sample_rate_hz));
        }
    }
    let out_len = sources
        .iter()
        .map(|(buf, _, delay)| delay + buf.len())
        .max()
        .unwrap();
    let mut out = vec![Complex64::default(); out_len];
    for (buf, gain_db, delay) in sources {
        let amp = 10f64.powf(gain_db / 20.0);
        for (i, s) in buf.samples.iter().enumerate() {
            out[delay + i] += amp * s;
        }
    }
    Ok(SampleBuffer::new(out, rate))
}

/// I.i.d. Bernoulli delivery mask for `n_packets` transmissions;
/// `true` means delivered.
pub fn packet_erasure(
    n_packets: usize,
    loss_prob: f64,
    seed: u64,
) -> Result<Vec<bool>, ChannelError> {
    if !(0.0..=1.0).contains(&loss_prob) {
        return Err(ChannelError::InvalidLossProbability(loss_prob));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lost = Bernoulli::new(loss_prob).unwrap();
    Ok((0..n_packets).map(|_| !lost.sample(&mut rng)).collect())
}

/// Stateful erasure sampler for discrete-event simulations where the
/// number of transmissions is not known up front. Same distribution and
/// determinism contract as [`packet_erasure`].
pub struct ErasureChannel {
    rng: ChaCha8Rng,
    lost: Bernoulli,
}

impl ErasureChannel {
    pub fn new(loss_prob: f64, seed: u64) -> Result<Self, ChannelError> {
        if !(0.0..=1.0).contains(&loss_prob) {
            return Err(ChannelError::InvalidLossProbability(loss_prob));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lost: Bernoulli::new(loss_prob).unwrap(),
        })
    }

    pub fn delivered(&mut self) -> bool {
        !self.lost.sample(&mut self.rng)
    }
}
