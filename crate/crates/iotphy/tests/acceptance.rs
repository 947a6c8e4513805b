//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (run with `--nocapture` to see
//! them). Monte-Carlo criteria use fixed seeds and are deterministic.

mod common;

use std::f64::consts::TAU;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::{crc24_oracle, CorrelationBank, WhitenerOracle};
use iotphy::ble::{
    self, advertising_schedule, assemble_packet, crc24, gfsk_demodulate, gfsk_modulate, whiten,
    BleAdvPdu, GfskConfig, ADV_CHANNELS, DEFAULT_HOP_GAP_US,
};
use iotphy::channel::awgn;
use iotphy::iq::{deframe_words, frame_words, QuantizedSample, WordFormat};
use iotphy::lora::harness::{
    concurrent_symbol_errors, find_snr_threshold, lora_symbol_errors,
};
use iotphy::lora::{
    chirp_gen, modulate_frame, ChirpDirection, Demodulator, LoraFrame, LoraParams,
};
use iotphy::ota::{
    compress_block, decompress_block, simulate_session, SessionConfig, SessionOutcome,
    TimingEnergyModel, TransferSource, BLOCK_SIZE,
};
use iotphy::BitBuffer;

fn params(sf: u8, bw: f64, osr: u32) -> LoraParams {
    LoraParams::new(sf, bw, osr).unwrap()
}

/// Criterion 1: zero symbol errors over 1000 random symbols for every
/// (SF 6..12) x (BW 125/250/500 kHz) x (osr 1/2/4), zero noise, through
/// the full modulate/demodulate pipeline, in under two minutes.
#[test]
fn criterion_01_lora_roundtrip_exact() {
    let start = Instant::now();
    let combos: Vec<(u8, f64, u32)> = (6..=12u8)
        .flat_map(|sf| {
            [125_000.0, 250_000.0, 500_000.0]
                .into_iter()
                .flat_map(move |bw| [1u32, 2, 4].into_iter().map(move |osr| (sf, bw, osr)))
        })
        .collect();
    assert_eq!(combos.len(), 63);

    let total_errors: usize = combos
        .par_iter()
        .map(|&(sf, bw, osr)| {
            let p = params(sf, bw, osr);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + sf as u64 * 8 + osr as u64);
            let mut demod = Demodulator::new(p.clone()).unwrap();
            let mut errors = 0usize;
            let mut remaining = 1000usize;
            // cap frame sizes so peak memory stays modest at SF12/osr4
            let frame_symbols = (4_000_000 / p.samples_per_symbol()).clamp(50, 1000);
            while remaining > 0 {
                let n = remaining.min(frame_symbols);
                remaining -= n;
                let symbols: Vec<u16> =
                    (0..n).map(|_| rng.random_range(0..p.chips()) as u16).collect();
                let frame = LoraFrame::new(symbols.clone(), p.clone()).unwrap();
                let tx = modulate_frame(&frame).unwrap();
                let (result, _) = demod.demodulate_frame(&tx).unwrap();
                assert_eq!(result.symbols.len(), n, "sf={sf} bw={bw} osr={osr}");
                errors += result
                    .symbols
                    .iter()
                    .zip(&symbols)
                    .filter(|(a, b)| a != b)
                    .count();
            }
            errors
        })
        .sum();

    let elapsed = start.elapsed();
    assert_eq!(total_errors, 0, "noiseless roundtrip must be exact");
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "runtime {elapsed:?} exceeds 2 min"
    );
    println!(
        "criterion 1 PASS: 0/63000 symbol errors across 63 configurations in {:.1} s",
        elapsed.as_secs_f64()
    );
}

/// Criterion 2: the FFT detector's argmax equals the brute-force
/// all-shift correlation argmax on noisy symbols, SF 6..9, >= 99%
/// agreement with identical tie-breaking.
#[test]
fn criterion_02_oracle_equivalence() {
    let mut report = String::new();
    for sf in 6..=9u8 {
        let p = params(sf, 125_000.0, 1);
        let bank = CorrelationBank::new(&p);
        let mut demod = Demodulator::new(p.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + sf as u64);
        let mut agree = 0usize;
        let trials = 150usize;
        for i in 0..trials {
            let sym = rng.random_range(0..p.chips()) as u16;
            let clean = chirp_gen(&p, sym, ChirpDirection::Up).unwrap();
            // noisy enough that errors happen, so agreement is not
            // trivially "both always right"
            let noisy = awgn(&clean, -13.0, 42_000 + i as u64).unwrap();
            let (fft_sym, _) = demod
                .demod_symbol(&noisy.samples, ChirpDirection::Up)
                .unwrap();
            let (oracle_sym, _) = bank.demod(&noisy.samples);
            if fft_sym == oracle_sym {
                agree += 1;
            }
        }
        let rate = agree as f64 / trials as f64;
        assert!(
            rate >= 0.99,
            "SF{sf}: FFT/oracle agreement {rate} below 99%"
        );
        report.push_str(&format!(" SF{sf} {agree}/{trials}"));
    }
    println!("criterion 2 PASS: FFT argmax matches correlation oracle:{report}");
}

fn lora_threshold(p: &LoraParams, seed: u64, refine_trials: usize) -> f64 {
    let measure = move |snr: f64, trials: usize| {
        let point_seed = seed ^ ((snr * 1000.0).round() as i64 as u64);
        lora_symbol_errors(p, snr, trials, point_seed)
    };
    find_snr_threshold(&measure, 0.01, -4.0, 1.0, 2_000, refine_trials)
}

/// Criterion 3: the 1%-SER SNR threshold improves by 2.5-3.5 dB per SF
/// step at fixed BW (>= 1e4 symbols per refined point).
#[test]
fn criterion_03_processing_gain_per_sf_step() {
    let thresholds: Vec<(u8, f64)> = [7u8, 8, 9]
        .par_iter()
        .map(|&sf| {
            let p = params(sf, 125_000.0, 1);
            (sf, lora_threshold(&p, 3000 + sf as u64, 40_000))
        })
        .collect();
    let mut report = String::new();
    for pair in thresholds.windows(2) {
        let (sf_a, t_a) = pair[0];
        let (sf_b, t_b) = pair[1];
        let step = t_a - t_b;
        assert!(
            (2.5..=3.5).contains(&step),
            "SF{sf_a}->SF{sf_b} threshold step {step:.2} dB outside [2.5, 3.5]"
        );
        report.push_str(&format!(" SF{sf_a}->SF{sf_b} {step:.2} dB"));
    }
    println!(
        "criterion 3 PASS: per-SF-step sensitivity gain{report} (thresholds {:?})",
        thresholds
            .iter()
            .map(|(sf, t)| format!("SF{sf} {t:.2}"))
            .collect::<Vec<_>>()
    );
}

/// Criterion 4: chirp-type discrimination (higher FFT peak picks the
/// direction) is >= 99% correct at 0 dB SNR, 1000 trials per direction.
#[test]
fn criterion_04_chirp_type_discrimination() {
    let p = params(8, 125_000.0, 1);
    let mut demod = Demodulator::new(p.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let mut correct = [0usize; 2];
    for (idx, dir) in [ChirpDirection::Up, ChirpDirection::Down].into_iter().enumerate() {
        for i in 0..1000u64 {
            let sym = rng.random_range(0..p.chips()) as u16;
            let clean = chirp_gen(&p, sym, dir).unwrap();
            let noisy = awgn(&clean, 0.0, 44_000 + i * 2 + idx as u64).unwrap();
            if demod.detect_chirp_direction(&noisy.samples).unwrap() == dir {
                correct[idx] += 1;
            }
        }
        assert!(
            correct[idx] >= 990,
            "{dir:?}: {}/1000 correct at 0 dB",
            correct[idx]
        );
    }
    println!(
        "criterion 4 PASS: direction detection at 0 dB SNR: up {}/1000, down {}/1000",
        correct[0], correct[1]
    );
}

/// Concurrent-study configurations: SF8 at 125 and 250 kHz sharing a
/// 500 kHz sample rate.
fn study_configs() -> (LoraParams, LoraParams) {
    (params(8, 125_000.0, 4), params(8, 250_000.0, 2))
}

/// Threshold of one stream in the two-stream setup. `interferer_rel_db`
/// is the interferer's power relative to the desired stream (None = no
/// interferer beyond numerical silence).
fn concurrent_threshold(
    desired_first: bool,
    interferer_rel_db: Option<f64>,
    fixed_interferer_abs_db: Option<f64>,
    seed: u64,
    refine_trials: usize,
) -> f64 {
    let (a, b) = study_configs();
    let measure = move |snr: f64, trials: usize| {
        let point_seed = seed ^ ((snr * 1000.0).round() as i64 as u64);
        let other = match (interferer_rel_db, fixed_interferer_abs_db) {
            (Some(rel), None) => snr + rel,
            (None, Some(abs)) => abs,
            (None, None) => -300.0,
            _ => unreachable!(),
        };
        let (snr_a, snr_b, idx) = if desired_first {
            (snr, other, 0)
        } else {
            (other, snr, 1)
        };
        let trials_a = if desired_first { trials } else { trials / 2 };
        concurrent_symbol_errors(&a, &b, snr_a, snr_b, trials_a, point_seed).unwrap()[idx].0
    };
    find_snr_threshold(&measure, 0.01, -6.0, 1.0, 2_000, refine_trials)
}

/// Criterion 5: equal-power concurrent SF8/BW125 + SF8/BW250 shifts each
/// stream's 1%-SER threshold by at most 2.5 dB (BW125) and 1.0 dB
/// (BW250) against solo.
#[test]
fn criterion_05_concurrent_equal_power_loss() {
    let jobs: Vec<(bool, Option<f64>)> = vec![
        (true, None),
        (true, Some(0.0)),
        (false, None),
        (false, Some(0.0)),
    ];
    let t: Vec<f64> = jobs
        .par_iter()
        .map(|&(first, rel)| concurrent_threshold(first, rel, None, 5000, 10_000))
        .collect();
    let (solo_a, conc_a, solo_b, conc_b) = (t[0], t[1], t[2], t[3]);
    let shift_a = conc_a - solo_a;
    let shift_b = conc_b - solo_b;
    assert!(
        shift_a <= 2.5,
        "BW125 stream equal-power shift {shift_a:.2} dB exceeds 2.5 dB"
    );
    assert!(
        shift_b <= 1.0,
        "BW250 stream equal-power shift {shift_b:.2} dB exceeds 1.0 dB"
    );
    println!(
        "criterion 5 PASS: equal-power threshold shifts BW125 {shift_a:.2} dB (solo {solo_a:.2}), BW250 {shift_b:.2} dB (solo {solo_b:.2})"
    );
}

/// Criterion 6: with the desired stream fixed at its solo threshold, an
/// interferer at noise power shifts the SER threshold by about 3 dB
/// (+/- 1 dB).
#[test]
fn criterion_06_near_far_interferer_at_noise_power() {
    let solo = concurrent_threshold(true, None, None, 6000, 10_000);
    // interferer pinned to the noise power (0 dB over unit noise)
    let with_interferer = concurrent_threshold(true, None, Some(0.0), 6000, 10_000);
    let shift = with_interferer - solo;
    assert!(
        (2.0..=4.0).contains(&shift),
        "near-far shift {shift:.2} dB outside 3 +/- 1 dB"
    );
    println!(
        "criterion 6 PASS: interferer at noise power shifts the threshold {shift:.2} dB (solo {solo:.2} -> {with_interferer:.2})"
    );
}

/// Criterion 7: CRC-24 and whitening match the bit-level shift-register
/// oracles on 1000 random PDUs; empty CRC equals the preset; whitening
/// is an involution on every channel 0-39.
#[test]
fn criterion_07_ble_bit_exactness() {
    assert_eq!(crc24(&[]), 0x55_5555);
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    for i in 0..1000 {
        let len = rng.random_range(1..=39usize);
        let pdu: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        assert_eq!(crc24(&pdu), crc24_oracle(&pdu), "PDU {i}");
        let channel = rng.random_range(0..=39u8);
        let got = whiten(&pdu, channel).unwrap();
        let want = WhitenerOracle::new(channel).whiten(&pdu);
        assert_eq!(got, want, "whitening PDU {i} channel {channel}");
    }
    let probe: Vec<u8> = (0..64).map(|i| (i * 13 + 5) as u8).collect();
    for channel in 0..=39u8 {
        let w = whiten(&probe, channel).unwrap();
        assert_eq!(whiten(&w, channel).unwrap(), probe, "channel {channel}");
    }
    println!(
        "criterion 7 PASS: CRC-24 and whitener match bit-level oracles on 1000 PDUs; involution holds on channels 0-39"
    );
}

/// Criterion 8: GFSK constant envelope within 1e-9, noiseless roundtrip
/// BER 0 over 1e4 bits, and 99% occupied bandwidth <= 2.2 MHz at 1 Mbps
/// (h = 0.5, BT = 0.5) by periodogram.
#[test]
fn criterion_08_gfsk_waveform() {
    let cfg = GfskConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8000);
    let bits: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
    let tx = gfsk_modulate(&bits, &cfg).unwrap();
    for s in &tx.samples {
        assert!((s.norm() - 1.0).abs() < 1e-9);
    }
    assert_eq!(gfsk_demodulate(&tx, &cfg).unwrap(), bits, "noiseless BER must be 0");

    // Welch-style averaged periodogram over 4096-sample segments
    let seg = 4096usize;
    let fs = cfg.sample_rate_hz() as f64;
    let fft = rustfft::FftPlanner::new().plan_fft_forward(seg);
    let mut psd = vec![0.0f64; seg];
    let n_segs = tx.samples.len() / seg;
    for k in 0..n_segs {
        let mut buf: Vec<Complex64> = tx.samples[k * seg..(k + 1) * seg].to_vec();
        fft.process(&mut buf);
        for (p, v) in psd.iter_mut().zip(&buf) {
            *p += v.norm_sqr();
        }
    }
    let total: f64 = psd.iter().sum();
    // grow a symmetric band around DC until it holds 99% of the power
    let mut cum = psd[0];
    let mut half_bins = 0usize;
    while cum < 0.99 * total && half_bins < seg / 2 - 1 {
        half_bins += 1;
        cum += psd[half_bins] + psd[seg - half_bins];
    }
    let obw_hz = (2 * half_bins + 1) as f64 / seg as f64 * fs;
    assert!(
        obw_hz <= 2.2e6,
        "99% occupied bandwidth {obw_hz:.0} Hz exceeds 2.2 MHz"
    );
    println!(
        "criterion 8 PASS: constant envelope, noiseless BER 0/10000, 99% OBW {:.3} MHz",
        obw_hz / 1e6
    );
}

/// Criterion 9: advertising schedule hops exactly 220 us apart and
/// bursts repeat at the (>= 20 ms) interval, asserted to the microsecond.
#[test]
fn criterion_09_advertising_timing() {
    let events = advertising_schedule(20.0, 0, 5, DEFAULT_HOP_GAP_US).unwrap();
    assert_eq!(events.len(), 15);
    for burst in 0..5u64 {
        let base = &events[(burst as usize) * 3..(burst as usize) * 3 + 3];
        assert_eq!(base[0].start_time_us, burst * 20_000);
        assert_eq!(base[1].start_time_us - base[0].start_time_us, 220);
        assert_eq!(base[2].start_time_us - base[1].start_time_us, 220);
        assert_eq!(
            [base[0].channel, base[1].channel, base[2].channel],
            ADV_CHANNELS
        );
    }
    assert!(advertising_schedule(19.999, 0, 1, DEFAULT_HOP_GAP_US).is_err());
    println!(
        "criterion 9 PASS: 220 us hop gaps and 20 ms burst spacing hold exactly over 5 bursts"
    );
}

/// Criterion 10: with the study link configuration (SF8, BW 500 kHz,
/// rate 4/6, 60 B packets, 8-chirp preamble) and a 99 kB compressed
/// payload, the zero-loss session finishes in 75-225 s with node energy
/// within +/-50% of 6144 mJ; session time grows with loss; delivered
/// bytes are identical in every completed run.
#[test]
fn criterion_10_ota_session_time_and_energy() {
    let lora = LoraParams::new(8, 500_000.0, 1)
        .unwrap()
        .with_coding_rate(6)
        .unwrap()
        .with_preamble_len(8);
    let mut times = Vec::new();
    for (i, loss) in [0.0, 0.05, 0.1, 0.2].into_iter().enumerate() {
        let mut cfg = SessionConfig::new(
            lora.clone(),
            TransferSource::RawPayload { bytes: 99_000 },
        );
        cfg.loss_prob = loss;
        cfg.seed = 10_000 + i as u64;
        cfg.timing = TimingEnergyModel::default();
        let run = simulate_session(cfg).unwrap();
        assert_eq!(run.report.outcome, SessionOutcome::Completed, "loss {loss}");
        assert_eq!(run.report.image_verified, Some(true), "loss {loss}");
        if i == 0 {
            let t = run.report.total_time_s;
            let e = run.report.node_energy_mj;
            assert!(
                (75.0..=225.0).contains(&t),
                "zero-loss time {t:.1} s outside [75, 225]"
            );
            assert!(
                (6144.0 * 0.5..=6144.0 * 1.5).contains(&e),
                "node energy {e:.0} mJ outside 6144 +/- 50%"
            );
            assert_eq!(run.report.data_packets, 1650);
            println!(
                "criterion 10 PASS: zero-loss 99 kB session {t:.1} s, {e:.0} mJ, 1650 DATA packets; times vs loss:"
            );
        }
        println!(
            "  loss {:.2}: {:.1} s, {} retransmissions",
            loss, run.report.total_time_s, run.report.retransmissions
        );
        times.push(run.report.total_time_s);
    }
    for pair in times.windows(2) {
        assert!(pair[1] > pair[0], "session time must grow with loss");
    }
}

/// Criterion 11: compression roundtrips on adversarial and random
/// corpora, the decompressor's working memory stays within one block
/// (plus a constant), and incompressible data expands at most 5%.
#[test]
fn criterion_11_compression_identity_and_memory() {
    let mut rng = ChaCha8Rng::seed_from_u64(11_000);
    let mut corpora: Vec<Vec<u8>> = vec![
        vec![],
        vec![0u8; BLOCK_SIZE],
        vec![0xFF; BLOCK_SIZE],
        (0..BLOCK_SIZE).map(|i| (i % 251) as u8).collect(),
        (0..BLOCK_SIZE).map(|_| rng.random()).collect(),
    ];
    for _ in 0..1000 {
        let len = rng.random_range(0..3000usize);
        let mut block = Vec::with_capacity(len);
        while block.len() < len {
            let run = rng.random_range(1..48usize).min(len - block.len());
            if rng.random_bool(0.6) {
                let b: u8 = rng.random();
                block.extend(std::iter::repeat(b).take(run));
            } else {
                block.extend((0..run).map(|_| rng.random::<u8>()));
            }
        }
        corpora.push(block);
    }
    for (i, block) in corpora.iter().enumerate() {
        let packed = compress_block(block).unwrap();
        let out = decompress_block(&packed, block.len()).unwrap();
        assert_eq!(&out, block, "corpus {i}");
        // working memory: exactly one output arena, never grown
        assert!(
            out.capacity() <= block.len().max(1),
            "corpus {i}: decoder allocated {} for {} bytes",
            out.capacity(),
            block.len()
        );
    }
    let random_block: Vec<u8> = (0..BLOCK_SIZE).map(|_| rng.random()).collect();
    let packed = compress_block(&random_block).unwrap();
    let expansion = packed.len() as f64 / random_block.len() as f64;
    assert!(
        expansion <= 1.05,
        "incompressible expansion {expansion:.4} exceeds 5%"
    );
    println!(
        "criterion 11 PASS: {} corpora roundtrip exactly within one-block memory; worst-case expansion {:.2}%",
        corpora.len(),
        (expansion - 1.0) * 100.0
    );
}

/// Criterion 12: serial word codec roundtrips exactly and, after a
/// single inserted or deleted bit, realigns within two word boundaries
/// (1000 randomized trials).
#[test]
fn criterion_12_word_framing_resync() {
    let fmt = WordFormat::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12_000);
    for trial in 0..1000 {
        let n_words = rng.random_range(10..60usize);
        let samples: Vec<QuantizedSample> = (0..n_words)
            .map(|_| {
                QuantizedSample::new(
                    rng.random_range(-4096..=4095i16),
                    rng.random_range(-4096..=4095i16),
                )
            })
            .collect();
        let clean = frame_words(&samples, &fmt);

        // exact roundtrip
        let (decoded, report) = deframe_words(&clean, &fmt);
        assert_eq!(decoded, samples, "trial {trial}: clean roundtrip");
        assert_eq!(report.discarded_bits(), 0);

        // single bit slip at a random position
        let mut bits: BitBuffer = clean.iter().collect();
        let pos = rng.random_range(0..bits.len());
        let word_idx = pos / 32;
        if rng.random_bool(0.5) {
            bits.insert(pos, rng.random());
        } else {
            bits.remove(pos);
        }
        let (slipped, _report) = deframe_words(&bits, &fmt);
        // everything after the next two word boundaries must decode
        let from = (word_idx + 2).min(n_words);
        let expected_tail = &samples[from..];
        assert!(
            slipped.len() >= expected_tail.len(),
            "trial {trial}: lost {} words, resync too slow",
            n_words - from
        );
        assert_eq!(
            &slipped[slipped.len() - expected_tail.len()..],
            expected_tail,
            "trial {trial}: tail after slip at bit {pos} must decode"
        );
    }
    println!(
        "criterion 12 PASS: exact roundtrip and <= 2-word resync after a bit slip, 1000 randomized trials"
    );
}
