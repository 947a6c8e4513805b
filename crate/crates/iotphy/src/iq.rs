//! Complex baseband sample types, 13-bit quantization and the radio's
//! 32-bit serial I/Q word codec.
//!
//! The radio front-end exchanges baseband samples as 32-bit serial words
//! at 13-bit resolution per component. Each word carries one complex
//! sample laid out MSB-first as
//!
//! ```text
//! [ I_SYNC(2) | I_DATA(13) | I_CTRL(1) | Q_SYNC(2) | Q_DATA(13) | Q_CTRL(1) ]
//! ```
//!
//! The deserializer locates word boundaries by scanning for positions
//! where both sync patterns match and recovers alignment after bit slips.

use std::fs;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitBuffer;

/// One complex baseband sample; `re` is the I component, `im` is Q.
pub type ComplexSample = Complex64;

/// Signed 13-bit range of the converter: [-4096, 4095].
pub const Q13_MIN: i16 = -4096;
pub const Q13_MAX: i16 = 4095;

#[derive(Debug, Error)]
pub enum IqError {
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("sample component {value} at index {index} outside 13-bit range [-4096, 4095]")]
    OutOfRange { index: usize, value: i32 },
    #[error("full_scale must be positive, got {0}")]
    InvalidFullScale(f64),
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("data file {path} has {len} bytes, not a multiple of 8 (two f32 components per sample)")]
    TruncatedFile { path: String, len: u64 },
    #[error("metadata sidecar {0} is missing")]
    MissingSidecar(String),
    #[error("framed file {path} has {len} bytes, not a multiple of 4 (32-bit words)")]
    TruncatedWordFile { path: String, len: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad metadata sidecar: {0}")]
    Meta(#[from] serde_json::Error),
}

/// Time-ordered complex samples with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<ComplexSample>,
    pub sample_rate_hz: u32,
}

impl SampleBuffer {
    pub fn new(samples: Vec<ComplexSample>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean power of the buffer (|x|^2 averaged over samples).
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// One sample quantized to the converter's 13-bit two's-complement range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedSample {
    pub i_q13: i16,
    pub q_q13: i16,
}

impl QuantizedSample {
    pub fn new(i_q13: i16, q_q13: i16) -> Self {
        debug_assert!((Q13_MIN..=Q13_MAX).contains(&i_q13));
        debug_assert!((Q13_MIN..=Q13_MAX).contains(&q_q13));
        Self { i_q13, q_q13 }
    }
}

/// Sync patterns and control bits used when framing serial words.
///
/// The word format reserves two sync bits per component and one control
/// bit; their values are configuration, not protocol constants. The
/// defaults are distinct non-constant patterns so that alignment stays
/// unambiguous under bit slips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFormat {
    pub i_sync: u8,
    pub q_sync: u8,
    pub i_ctrl: bool,
    pub q_ctrl: bool,
}

impl Default for WordFormat {
    fn default() -> Self {
        Self {
            i_sync: 0b10,
            q_sync: 0b01,
            i_ctrl: false,
            q_ctrl: false,
        }
    }
}

/// One framed 32-bit serial word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IqWord(pub u32);

impl IqWord {
    pub fn pack(sample: QuantizedSample, fmt: &WordFormat) -> Self {
        let i_bits = (sample.i_q13 as u32) & 0x1FFF;
        let q_bits = (sample.q_q13 as u32) & 0x1FFF;
        let word = ((fmt.i_sync as u32 & 0b11) << 30)
            | (i_bits << 17)
            | ((fmt.i_ctrl as u32) << 16)
            | ((fmt.q_sync as u32 & 0b11) << 14)
            | (q_bits << 1)
            | fmt.q_ctrl as u32;
        Self(word)
    }

    pub fn unpack(&self) -> QuantizedSample {
        QuantizedSample {
            i_q13: sign_extend_13((self.0 >> 17) & 0x1FFF),
            q_q13: sign_extend_13((self.0 >> 1) & 0x1FFF),
        }
    }

    pub fn i_sync(&self) -> u8 {
        ((self.0 >> 30) & 0b11) as u8
    }

    pub fn q_sync(&self) -> u8 {
        ((self.0 >> 14) & 0b11) as u8
    }
}

fn sign_extend_13(bits: u32) -> i16 {
    if bits & 0x1000 != 0 {
        (bits | !0x1FFFu32) as i32 as i16
    } else {
        bits as i16
    }
}

/// Map samples to the 13-bit grid: round(x / full_scale * 4095),
/// half away from zero, clamped to [-4096, 4095].
pub fn quantize(buf: &SampleBuffer, full_scale: f64) -> Result<Vec<QuantizedSample>, IqError> {
    if !(full_scale > 0.0) {
        return Err(IqError::InvalidFullScale(full_scale));
    }
    let q = |x: f64| -> i16 {
        let v = (x / full_scale * Q13_MAX as f64).round();
        v.clamp(Q13_MIN as f64, Q13_MAX as f64) as i16
    };
    buf.samples
        .iter()
        .enumerate()
        .map(|(index, s)| {
            if !s.re.is_finite() || !s.im.is_finite() {
                return Err(IqError::NonFiniteSample { index });
            }
            Ok(QuantizedSample::new(q(s.re), q(s.im)))
        })
        .collect()
}

/// Inverse of [`quantize`]: x_q13 / 4095 * full_scale per component.
pub fn dequantize(
    qs: &[QuantizedSample],
    full_scale: f64,
    sample_rate_hz: u32,
) -> Result<SampleBuffer, IqError> {
    if !(full_scale > 0.0) {
        return Err(IqError::InvalidFullScale(full_scale));
    }
    if sample_rate_hz == 0 {
        return Err(IqError::InvalidSampleRate);
    }
    let d = |v: i16| v as f64 / Q13_MAX as f64 * full_scale;
    let samples = qs
        .iter()
        .enumerate()
        .map(|(index, q)| {
            for v in [q.i_q13, q.q_q13] {
                if !(Q13_MIN..=Q13_MAX).contains(&v) {
                    return Err(IqError::OutOfRange {
                        index,
                        value: v as i32,
                    });
                }
            }
            Ok(Complex64::new(d(q.i_q13), d(q.q_q13)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SampleBuffer::new(samples, sample_rate_hz))
}

/// Serialize samples into the 32-bit word format, MSB first.
pub fn frame_words(qs: &[QuantizedSample], fmt: &WordFormat) -> BitBuffer {
    let mut bits = BitBuffer::with_capacity(qs.len() * 32);
    for &q in qs {
        bits.push_bits_msb(IqWord::pack(q, fmt).0, 32);
    }
    bits
}

/// Where and why bits were dropped while deserializing a word stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResyncReport {
    /// Half-open bit ranges that did not decode into words.
    pub discarded_bit_ranges: Vec<Range<usize>>,
    /// Bit offsets at which word alignment was (re)acquired.
    pub lock_offsets: Vec<usize>,
}

impl ResyncReport {
    pub fn discarded_bits(&self) -> usize {
        self.discarded_bit_ranges.iter().map(|r| r.len()).sum()
    }
}

/// How many consecutive word positions must show valid sync patterns
/// before the deserializer locks. Random payload bits can mimic the two
/// 2-bit sync fields at a wrong phase with probability 1/16 per word, so
/// the confirmation window keeps false locks out of randomized slip tests.
const LOCK_CONFIRM_WORDS: usize = 5;

fn sync_match(bits: &BitBuffer, p: usize, fmt: &WordFormat) -> bool {
    bits.read_bits_msb(p, 2) as u8 == (fmt.i_sync & 0b11)
        && bits.read_bits_msb(p + 16, 2) as u8 == (fmt.q_sync & 0b11)
}

fn find_lock(bits: &BitBuffer, from: usize, fmt: &WordFormat) -> Option<usize> {
    if bits.len() < 32 {
        return None;
    }
    for q in from..=bits.len() - 32 {
        let mut ok = true;
        for k in 0..LOCK_CONFIRM_WORDS {
            let p = q + 32 * k;
            if p + 32 > bits.len() {
                break;
            }
            if !sync_match(bits, p, fmt) {
                ok = false;
                break;
            }
        }
        if ok {
            return Some(q);
        }
    }
    None
}

/// Deserialize a bitstream back into quantized samples.
///
/// Word boundaries are located by scanning for positions where both sync
/// patterns match. After a mid-stream corruption the scanner discards
/// bits until alignment is confirmed again and reports the dropped
/// ranges. A stream with no valid alignment decodes to nothing, with the
/// whole stream reported as discarded.
pub fn deframe_words(bits: &BitBuffer, fmt: &WordFormat) -> (Vec<QuantizedSample>, ResyncReport) {
    let mut out = Vec::new();
    let mut report = ResyncReport::default();
    let mut pos = 0usize;

    loop {
        let Some(lock) = find_lock(bits, pos, fmt) else {
            if pos < bits.len() {
                report.discarded_bit_ranges.push(pos..bits.len());
            }
            break;
        };
        if lock > pos {
            report.discarded_bit_ranges.push(pos..lock);
        }
        report.lock_offsets.push(lock);

        let mut p = lock;
        while p + 32 <= bits.len() && sync_match(bits, p, fmt) {
            out.push(IqWord(bits.read_bits_msb(p, 32)).unpack());
            p += 32;
        }
        if p + 32 > bits.len() {
            if p < bits.len() {
                report.discarded_bit_ranges.push(p..bits.len());
            }
            break;
        }
        pos = p;
    }

    (out, report)
}

#[derive(Debug, Serialize, Deserialize)]
struct IqMeta {
    sample_rate_hz: u32,
    description: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.json");
    os.into()
}

/// Write a raw I/Q file: header-less interleaved IEEE 754 32-bit
/// little-endian floats (I then Q per sample) plus a `.meta.json`
/// sidecar carrying the sample rate and a description.
pub fn write_iq_file(path: &Path, buf: &SampleBuffer, description: &str) -> Result<(), IqError> {
    let mut data = Vec::with_capacity(buf.samples.len() * 8);
    for s in &buf.samples {
        data.extend_from_slice(&(s.re as f32).to_le_bytes());
        data.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    fs::File::create(path)?.write_all(&data)?;
    let meta = IqMeta {
        sample_rate_hz: buf.sample_rate_hz,
        description: description.to_string(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Read a raw I/Q file written by [`write_iq_file`].
pub fn read_iq_file(path: &Path) -> Result<SampleBuffer, IqError> {
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(IqError::MissingSidecar(sidecar.display().to_string()));
    }
    let meta: IqMeta = serde_json::from_str(&fs::read_to_string(&sidecar)?)?;

    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    if data.len() % 8 != 0 {
        return Err(IqError::TruncatedFile {
            path: path.display().to_string(),
            len: data.len() as u64,
        });
    }
    let samples = data
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64,
            )
        })
        .collect();
    Ok(SampleBuffer::new(samples, meta.sample_rate_hz))
}

/// Write framed words as big-endian 32-bit words, MSB-first bit order.
pub fn write_framed_file(path: &Path, bits: &BitBuffer) -> Result<(), IqError> {
    fs::write(path, bits.to_bytes_msb_first())?;
    Ok(())
}

/// Read a framed-word file back into a bitstream.
pub fn read_framed_file(path: &Path) -> Result<BitBuffer, IqError> {
    let data = fs::read(path)?;
    if data.len() % 4 != 0 {
        return Err(IqError::TruncatedWordFile {
            path: path.display().to_string(),
            len: data.len() as u64,
        });
    }
    Ok(BitBuffer::from_bytes_msb_first(&data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(samples: &[(f64, f64)]) -> SampleBuffer {
        SampleBuffer::new(
            samples.iter().map(|&(i, q)| Complex64::new(i, q)).collect(),
            4_000_000,
        )
    }

    #[test]
    fn quantize_zero_and_full_scale() {
        let qs = quantize(&buf(&[(0.0, 0.0), (1.0, -1.0)]), 1.0).unwrap();
        assert_eq!(qs[0], QuantizedSample::new(0, 0));
        assert_eq!(qs[1], QuantizedSample::new(4095, -4095));
    }

    #[test]
    fn quantize_half_scale_rounds_away_from_zero() {
        // round(0.5 * 4095) = round(2047.5) = 2048, round(0.25 * 4095) = 1024
        let qs = quantize(&buf(&[(0.5, 0.25)]), 1.0).unwrap();
        assert_eq!(qs[0], QuantizedSample::new(2048, 1024));
    }

    #[test]
    fn quantize_rejects_non_finite() {
        let err = quantize(&buf(&[(0.0, 0.0), (f64::NAN, 0.0)]), 1.0).unwrap_err();
        match err {
            IqError::NonFiniteSample { index } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dequantize_values() {
        let out = dequantize(
            &[
                QuantizedSample::new(0, 0),
                QuantizedSample::new(4095, -4095),
                QuantizedSample::new(2048, 1024),
            ],
            1.0,
            1,
        )
        .unwrap();
        assert_eq!(out.samples[0], Complex64::new(0.0, 0.0));
        assert_eq!(out.samples[1], Complex64::new(1.0, -1.0));
        assert!((out.samples[2].re - 2048.0 / 4095.0).abs() < 1e-15);
        assert!((out.samples[2].im - 1024.0 / 4095.0).abs() < 1e-15);
    }

    #[test]
    fn quantization_error_bound() {
        // |dequantize(quantize(x)) - x| <= full_scale / 2048 per component
        let full_scale = 0.75;
        let n = 4001;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let x = (i as f64 / (n - 1) as f64) * 2.0 - 1.0;
                (x * full_scale, -x * full_scale)
            })
            .collect();
        let b = buf(&samples);
        let rt = dequantize(&quantize(&b, full_scale).unwrap(), full_scale, 1).unwrap();
        for (orig, got) in b.samples.iter().zip(rt.samples.iter()) {
            assert!((orig.re - got.re).abs() <= full_scale / 2048.0);
            assert!((orig.im - got.im).abs() <= full_scale / 2048.0);
        }
    }

    #[test]
    fn word_layout_zero_sample() {
        let fmt = WordFormat::default();
        let w = IqWord::pack(QuantizedSample::new(0, 0), &fmt);
        assert_eq!(w.0, 0b10_0000000000000_0_01_0000000000000_0);
    }

    #[test]
    fn word_pack_unpack_negative() {
        let fmt = WordFormat::default();
        for (i, q) in [(-4096, 4095), (-1, 1), (1234, -1234)] {
            let w = IqWord::pack(QuantizedSample::new(i, q), &fmt);
            assert_eq!(w.unpack(), QuantizedSample::new(i, q));
            assert_eq!(w.i_sync(), fmt.i_sync);
            assert_eq!(w.q_sync(), fmt.q_sync);
        }
    }

    #[test]
    fn frame_empty_and_lengths() {
        let fmt = WordFormat::default();
        assert_eq!(frame_words(&[], &fmt).len(), 0);
        let two = frame_words(
            &[QuantizedSample::new(1, 2), QuantizedSample::new(3, 4)],
            &fmt,
        );
        assert_eq!(two.len(), 64);
        // second word starts at bit offset 32
        assert_eq!(two.read_bits_msb(32, 2) as u8, fmt.i_sync);
    }

    #[test]
    fn deframe_roundtrip() {
        let fmt = WordFormat::default();
        let qs: Vec<QuantizedSample> = (0..50)
            .map(|i| QuantizedSample::new((i * 37 % 8191 - 4096) as i16, (i * 91 % 8191 - 4096) as i16))
            .collect();
        let (decoded, report) = deframe_words(&frame_words(&qs, &fmt), &fmt);
        assert_eq!(decoded, qs);
        assert_eq!(report.discarded_bits(), 0);
        assert_eq!(report.lock_offsets, vec![0]);
    }

    #[test]
    fn deframe_recovers_from_prepended_bit() {
        let fmt = WordFormat::default();
        let qs: Vec<QuantizedSample> = (0..20)
            .map(|i| QuantizedSample::new(i as i16 * 100 - 1000, i as i16 * -50))
            .collect();
        let mut bits = BitBuffer::new();
        bits.push(false);
        bits.extend(&frame_words(&qs, &fmt));
        let (decoded, report) = deframe_words(&bits, &fmt);
        assert_eq!(report.lock_offsets, vec![1]);
        assert_eq!(report.discarded_bit_ranges[0], 0..1);
        // recovered minus at most the first 2 samples
        assert!(decoded.len() >= qs.len() - 2);
        assert!(qs.ends_with(&decoded[decoded.len().saturating_sub(qs.len())..]));
    }

    #[test]
    fn deframe_all_zero_stream() {
        let fmt = WordFormat::default();
        let bits = BitBuffer::from_bytes_msb_first(&[0u8; 64]);
        let (decoded, report) = deframe_words(&bits, &fmt);
        assert!(decoded.is_empty());
        assert_eq!(report.discarded_bit_ranges, vec![0..512]);
    }

    #[test]
    fn iq_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("capture.iq");
        let b = SampleBuffer::new(
            vec![
                Complex64::new(0.5, -0.25),
                Complex64::new(-1.0, 1.0),
                Complex64::new(0.0, 0.125),
            ],
            125_000,
        );
        write_iq_file(&path, &b, "test capture").unwrap();
        let back = read_iq_file(&path).unwrap();
        assert_eq!(back.sample_rate_hz, 125_000);
        // components picked to be exactly representable in f32
        assert_eq!(back.samples, b.samples);
    }

    #[test]
    fn iq_file_empty_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.iq");
        write_iq_file(&path, &SampleBuffer::new(vec![], 8000), "").unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 0);
        let back = read_iq_file(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.sample_rate_hz, 8000);
    }

    #[test]
    fn iq_file_eight_bytes_is_one_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.iq");
        write_iq_file(
            &path,
            &SampleBuffer::new(vec![Complex64::new(1.0, -1.0)], 1000),
            "",
        )
        .unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 8);
        assert_eq!(read_iq_file(&path).unwrap().len(), 1);
    }

    #[test]
    fn iq_file_truncated_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.iq");
        write_iq_file(
            &path,
            &SampleBuffer::new(vec![Complex64::new(1.0, 1.0)], 1000),
            "",
        )
        .unwrap();
        let mut data = fs::read(&path).unwrap();
        data.pop();
        fs::write(&path, &data).unwrap();
        assert!(matches!(
            read_iq_file(&path),
            Err(IqError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn iq_file_missing_sidecar_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nometa.iq");
        fs::write(&path, [0u8; 8]).unwrap();
        assert!(matches!(
            read_iq_file(&path),
            Err(IqError::MissingSidecar(_))
        ));
    }
}
