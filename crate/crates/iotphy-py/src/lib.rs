//! Python bindings for the baseband toolkit. Complex samples cross the
//! boundary as Python `complex` lists; structured configs and reports as
//! JSON strings or plain tuples.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use iotphy::ble;
use iotphy::channel;
use iotphy::iq;
use iotphy::lora;
use iotphy::ota;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// LoRa configuration. `sample_rate = bw_hz * osr`.
#[pyclass(name = "LoraParams")]
struct PyLoraParams {
    inner: lora::LoraParams,
}

#[pymethods]
impl PyLoraParams {
    #[new]
    #[pyo3(signature = (sf, bw_hz, osr=1, coding_rate_denominator=4, preamble_len=10, sync_symbols=(0, 0), sfd_len_symbols=2.25))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        sf: u8,
        bw_hz: f64,
        osr: u32,
        coding_rate_denominator: u8,
        preamble_len: u32,
        sync_symbols: (u16, u16),
        sfd_len_symbols: f64,
    ) -> PyResult<Self> {
        let mut p = lora::LoraParams::new(sf, bw_hz, osr).map_err(err)?;
        p.coding_rate_denominator = coding_rate_denominator;
        p.preamble_len = preamble_len;
        p.sync_symbols = [sync_symbols.0, sync_symbols.1];
        p.sfd_len_symbols = sfd_len_symbols;
        p.validate().map_err(err)?;
        Ok(Self { inner: p })
    }

    #[getter]
    fn sf(&self) -> u8 {
        self.inner.sf
    }

    #[getter]
    fn bw_hz(&self) -> f64 {
        self.inner.bw_hz
    }

    #[getter]
    fn osr(&self) -> u32 {
        self.inner.osr
    }

    #[getter]
    fn sample_rate_hz(&self) -> u32 {
        self.inner.sample_rate_hz()
    }

    #[getter]
    fn samples_per_symbol(&self) -> usize {
        self.inner.samples_per_symbol()
    }

    #[getter]
    fn chirp_slope_hz_per_s(&self) -> f64 {
        self.inner.slope().0
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "LoraParams(sf={}, bw_hz={}, osr={})",
            self.inner.sf, self.inner.bw_hz, self.inner.osr
        )
    }
}

/// Modulate payload bytes into a LoRa frame; returns baseband samples.
#[pyfunction]
fn lora_modulate(params: &PyLoraParams, payload: Vec<u8>) -> PyResult<Vec<Complex64>> {
    let frame = lora::LoraFrame::from_payload(&payload, params.inner.clone());
    Ok(lora::modulate_frame(&frame).map_err(err)?.samples)
}

/// Demodulate a captured frame; returns (payload bytes, symbols,
/// start offset in samples).
#[pyfunction]
fn lora_demodulate(
    params: &PyLoraParams,
    samples: Vec<Complex64>,
) -> PyResult<(Vec<u8>, Vec<u16>, usize)> {
    let buf = iq::SampleBuffer::new(samples, params.inner.sample_rate_hz());
    let mut demod = lora::Demodulator::new(params.inner.clone()).map_err(err)?;
    let (result, bytes) = demod.demodulate_frame(&buf).map_err(err)?;
    Ok((bytes, result.symbols, result.start_offset_samples))
}

/// One-symbol detection against the given reference direction.
#[pyfunction]
#[pyo3(signature = (params, window, up=true))]
fn lora_demod_symbol(
    params: &PyLoraParams,
    window: Vec<Complex64>,
    up: bool,
) -> PyResult<(u16, f64)> {
    let mut demod = lora::Demodulator::new(params.inner.clone()).map_err(err)?;
    let dir = if up {
        lora::ChirpDirection::Up
    } else {
        lora::ChirpDirection::Down
    };
    demod.demod_symbol(&window, dir).map_err(err)
}

#[pyfunction]
fn lora_airtime(params: &PyLoraParams, payload_bytes: usize) -> f64 {
    lora::airtime(&params.inner, payload_bytes)
}

#[pyfunction]
fn lora_data_rate(params: &PyLoraParams) -> f64 {
    lora::data_rate(&params.inner)
}

/// BLE CRC-24 over PDU bytes; returns the 24-bit register state.
#[pyfunction]
fn ble_crc24(pdu: Vec<u8>) -> u32 {
    ble::crc24(&pdu)
}

/// BLE channel whitening (self-inverse).
#[pyfunction]
fn ble_whiten(data: Vec<u8>, channel: u8) -> PyResult<Vec<u8>> {
    ble::whiten(&data, channel).map_err(err)
}

/// Assemble an advertisement; returns (on-air bytes MSB-first, CRC bytes).
#[pyfunction]
fn ble_assemble(adv_address: [u8; 6], adv_data: Vec<u8>, channel: u8) -> PyResult<(Vec<u8>, [u8; 3])> {
    let pdu = ble::BleAdvPdu::new(adv_address, adv_data).map_err(err)?;
    let packet = ble::assemble_packet(&pdu, channel).map_err(err)?;
    Ok((packet.bits.to_bytes_msb_first(), packet.crc))
}

/// GFSK-modulate a bit sequence at 1 Mbps defaults; returns samples.
#[pyfunction]
#[pyo3(signature = (bits, bit_rate_bps=1e6, modulation_index=0.5, gaussian_bt=0.5, osr=8))]
fn gfsk_modulate(
    bits: Vec<bool>,
    bit_rate_bps: f64,
    modulation_index: f64,
    gaussian_bt: f64,
    osr: u32,
) -> PyResult<Vec<Complex64>> {
    let cfg = ble::GfskConfig {
        bit_rate_bps,
        modulation_index,
        gaussian_bt,
        osr,
    };
    Ok(ble::gfsk_modulate(&bits, &cfg).map_err(err)?.samples)
}

#[pyfunction]
#[pyo3(signature = (samples, bit_rate_bps=1e6, modulation_index=0.5, gaussian_bt=0.5, osr=8))]
fn gfsk_demodulate(
    samples: Vec<Complex64>,
    bit_rate_bps: f64,
    modulation_index: f64,
    gaussian_bt: f64,
    osr: u32,
) -> PyResult<Vec<bool>> {
    let cfg = ble::GfskConfig {
        bit_rate_bps,
        modulation_index,
        gaussian_bt,
        osr,
    };
    let buf = iq::SampleBuffer::new(samples, cfg.sample_rate_hz());
    ble::gfsk_demodulate(&buf, &cfg).map_err(err)
}

/// Advertising schedule as (channel, start_time_us) tuples.
#[pyfunction]
#[pyo3(signature = (interval_ms, n_bursts, start_time_us=0, hop_gap_us=220))]
fn advertising_schedule(
    interval_ms: f64,
    n_bursts: usize,
    start_time_us: u64,
    hop_gap_us: u64,
) -> PyResult<Vec<(u8, u64)>> {
    Ok(ble::advertising_schedule(interval_ms, start_time_us, n_bursts, hop_gap_us)
        .map_err(err)?
        .into_iter()
        .map(|e| (e.channel, e.start_time_us))
        .collect())
}

/// Add seeded white Gaussian noise at the given SNR (dB, full band).
#[pyfunction]
fn awgn(samples: Vec<Complex64>, snr_db: f64, seed: u64, sample_rate_hz: u32) -> PyResult<Vec<Complex64>> {
    let buf = iq::SampleBuffer::new(samples, sample_rate_hz);
    Ok(channel::awgn(&buf, snr_db, seed).map_err(err)?.samples)
}

/// Quantize to 13 bits and frame into 32-bit serial words (big-endian
/// byte stream, MSB-first).
#[pyfunction]
#[pyo3(signature = (samples, full_scale=1.0))]
fn iq_frame_words(samples: Vec<Complex64>, full_scale: f64) -> PyResult<Vec<u8>> {
    let buf = iq::SampleBuffer::new(samples, 1);
    let qs = iq::quantize(&buf, full_scale).map_err(err)?;
    Ok(iq::frame_words(&qs, &iq::WordFormat::default()).to_bytes_msb_first())
}

/// Deserialize framed words; returns (samples, discarded bit count).
#[pyfunction]
#[pyo3(signature = (words, full_scale=1.0))]
fn iq_deframe_words(words: Vec<u8>, full_scale: f64) -> PyResult<(Vec<Complex64>, usize)> {
    let bits = iotphy::BitBuffer::from_bytes_msb_first(&words);
    let (qs, report) = iq::deframe_words(&bits, &iq::WordFormat::default());
    let buf = iq::dequantize(&qs, full_scale, 1).map_err(err)?;
    Ok((buf.samples, report.discarded_bits()))
}

#[pyfunction]
fn compress_block(block: Vec<u8>) -> PyResult<Vec<u8>> {
    ota::compress_block(&block).map_err(err)
}

#[pyfunction]
fn decompress_block(data: Vec<u8>, max_len: usize) -> PyResult<Vec<u8>> {
    ota::decompress_block(&data, max_len).map_err(err)
}

/// Simulate an OTA update session. Takes the same JSON the CLI accepts
/// (without file paths: use payload_bytes) and returns the report JSON.
#[pyfunction]
fn ota_simulate(session_json: &str) -> PyResult<String> {
    #[derive(serde::Deserialize)]
    struct Spec {
        payload_bytes: usize,
        loss_prob: f64,
        seed: u64,
        sf: u8,
        bw_hz: f64,
        cr: u8,
        #[serde(default = "sixty")]
        payload_size: usize,
        #[serde(default = "eight")]
        preamble: u32,
        power_model: Option<ota::PowerModel>,
    }
    fn sixty() -> usize {
        60
    }
    fn eight() -> u32 {
        8
    }
    let spec: Spec = serde_json::from_str(session_json).map_err(err)?;
    let lora = lora::LoraParams::new(spec.sf, spec.bw_hz, 1)
        .map_err(err)?
        .with_coding_rate(spec.cr)
        .map_err(err)?
        .with_preamble_len(spec.preamble);
    let mut cfg = ota::SessionConfig::new(
        lora,
        ota::TransferSource::RawPayload {
            bytes: spec.payload_bytes,
        },
    );
    cfg.payload_size = spec.payload_size;
    cfg.loss_prob = spec.loss_prob;
    cfg.seed = spec.seed;
    if let Some(p) = spec.power_model {
        cfg.timing.power = p;
    }
    let run = ota::simulate_session(cfg).map_err(err)?;
    serde_json::to_string_pretty(&run.report).map_err(err)
}

#[pymodule]
fn iotphy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLoraParams>()?;
    m.add_function(wrap_pyfunction!(lora_modulate, m)?)?;
    m.add_function(wrap_pyfunction!(lora_demodulate, m)?)?;
    m.add_function(wrap_pyfunction!(lora_demod_symbol, m)?)?;
    m.add_function(wrap_pyfunction!(lora_airtime, m)?)?;
    m.add_function(wrap_pyfunction!(lora_data_rate, m)?)?;
    m.add_function(wrap_pyfunction!(ble_crc24, m)?)?;
    m.add_function(wrap_pyfunction!(ble_whiten, m)?)?;
    m.add_function(wrap_pyfunction!(ble_assemble, m)?)?;
    m.add_function(wrap_pyfunction!(gfsk_modulate, m)?)?;
    m.add_function(wrap_pyfunction!(gfsk_demodulate, m)?)?;
    m.add_function(wrap_pyfunction!(advertising_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(awgn, m)?)?;
    m.add_function(wrap_pyfunction!(iq_frame_words, m)?)?;
    m.add_function(wrap_pyfunction!(iq_deframe_words, m)?)?;
    m.add_function(wrap_pyfunction!(compress_block, m)?)?;
    m.add_function(wrap_pyfunction!(decompress_block, m)?)?;
    m.add_function(wrap_pyfunction!(ota_simulate, m)?)?;
    Ok(())
}
