//! Batch front end for the baseband toolkit: modulate and demodulate
//! LoRa frames, run SER sweeps, assemble BLE beacons, simulate OTA
//! update sessions, and convert between raw I/Q and framed-word files.
//!
//! Exit codes: 0 ok, 1 usage/config error, 2 decode-not-found,
//! 3 protocol (session) failure.

mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use iotphy::ble::{self, BleAdvPdu, GfskConfig};
use iotphy::iq::{self, SampleBuffer, WordFormat};
use iotphy::lora::{self, Demodulator, LoraError, LoraFrame, LoraParams};
use iotphy::ota::{
    simulate_session, FirmwareImage, FirmwareKind, PowerModel, SessionConfig, SessionOutcome, TransferSource,
};

/// Default seed: --seed flag, else IOTPHY_SEED, else 0.
fn default_seed() -> u64 {
    std::env::var("IOTPHY_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

#[derive(Parser)]
#[command(name = "iotphy", version, about = "IoT PHY and protocol toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Modulate a LoRa frame to a raw I/Q file.
    LoraMod {
        /// LoRa configuration: JSON file path or inline JSON object.
        #[arg(long)]
        config: String,
        /// Payload bytes as hex (may be empty).
        #[arg(long, default_value = "")]
        payload_hex: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Demodulate a raw I/Q file and print the recovered payload.
    LoraDemod {
        #[arg(long)]
        config: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// Print the full demodulation record as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Monte-Carlo symbol/bit error rate sweep over SNR.
    SerSweep {
        /// Sweep specification: JSON file path or inline JSON.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        /// Cap on worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Assemble a BLE advertisement and write its GFSK baseband.
    BleBeacon {
        /// PDU description: JSON file path or inline JSON
        /// {adv_address, adv_data, channel?}.
        #[arg(long)]
        pdu: String,
        #[arg(long)]
        channel: Option<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concurrent orthogonal-slope reception demo: SER per stream.
    ConcurrentDemo {
        /// JSON array of two LoRa configurations sharing a sample rate.
        #[arg(long)]
        configs: String,
        #[arg(long, allow_negative_numbers = true)]
        snr_a: f64,
        #[arg(long, allow_negative_numbers = true)]
        snr_b: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate an over-the-air update session.
    OtaSim {
        /// Session configuration JSON (see README for the schema).
        #[arg(long)]
        session: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert between raw I/Q files and framed 32-bit word files.
    Iq {
        #[command(subcommand)]
        direction: IqDirection,
    },
}

#[derive(Subcommand)]
enum IqDirection {
    /// Raw I/Q file -> framed-word file.
    Frame {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Amplitude mapped to the 13-bit full-scale code.
        #[arg(long, default_value_t = 1.0)]
        full_scale: f64,
    },
    /// Framed-word file -> raw I/Q file.
    Deframe {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        full_scale: f64,
        /// Sample rate recorded in the output sidecar.
        #[arg(long, default_value_t = 4_000_000)]
        sample_rate_hz: u32,
    },
}

/// Accept either a path to a JSON file or inline JSON.
fn load_json<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T> {
    let text = if arg.trim_start().starts_with(['{', '[']) {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading {what} from {arg}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("parsing {what}"))
}

fn cmd_lora_mod(config: &str, payload_hex: &str, out: &PathBuf) -> Result<()> {
    let params: LoraParams = load_json(config, "LoRa config")?;
    params.validate()?;
    let payload = hex::decode(payload_hex.trim()).context("decoding --payload-hex")?;
    let frame = LoraFrame::from_payload(&payload, params.clone());
    let tx = lora::modulate_frame(&frame)?;
    iq::write_iq_file(out, &tx, &format!("lora sf{} bw{}", params.sf, params.bw_hz))?;
    println!(
        "wrote {} samples at {} Hz to {}",
        tx.len(),
        tx.sample_rate_hz,
        out.display()
    );
    println!("airtime_s {:.9}", lora::airtime(&params, payload.len()));
    println!("data_rate_bps {:.4}", lora::data_rate(&params));
    Ok(())
}

fn cmd_lora_demod(config: &str, input: &PathBuf, json: bool) -> Result<Option<ExitCode>> {
    let params: LoraParams = load_json(config, "LoRa config")?;
    let buf = iq::read_iq_file(input)?;
    let mut demod = Demodulator::new(params)?;
    match demod.demodulate_frame(&buf) {
        Ok((result, bytes)) => {
            println!("payload_hex {}", hex::encode(&bytes));
            if json {
                println!("{}", serde_json::to_string_pretty(&result)?);
            } else {
                println!(
                    "symbols {} start_offset {} dropped_tail {}",
                    result.symbols.len(),
                    result.start_offset_samples,
                    result.dropped_tail_samples
                );
            }
            Ok(None)
        }
        Err(LoraError::SyncNotFound) => {
            eprintln!("no frame found: preamble sync failed");
            Ok(Some(ExitCode::from(2)))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_ble_beacon(pdu_arg: &str, channel_flag: Option<u8>, out: &PathBuf) -> Result<()> {
    #[derive(Deserialize)]
    struct PduSpec {
        adv_address: String,
        #[serde(default)]
        adv_data: String,
        channel: Option<u8>,
        #[serde(default)]
        gfsk: Option<GfskConfig>,
    }
    let spec: PduSpec = load_json(pdu_arg, "PDU description")?;
    let addr_bytes = hex::decode(spec.adv_address.trim()).context("decoding adv_address hex")?;
    if addr_bytes.len() != 6 {
        bail!("adv_address must be 6 bytes, got {}", addr_bytes.len());
    }
    let mut adv_address = [0u8; 6];
    adv_address.copy_from_slice(&addr_bytes);
    let adv_data = hex::decode(spec.adv_data.trim()).context("decoding adv_data hex")?;
    let channel = channel_flag
        .or(spec.channel)
        .context("channel required (flag or JSON field)")?;

    let pdu = BleAdvPdu::new(adv_address, adv_data)?;
    let packet = ble::assemble_packet(&pdu, channel)?;
    let cfg = spec.gfsk.unwrap_or_default();
    let bits: Vec<bool> = packet.bits.iter().collect();
    let tx = ble::gfsk_modulate(&bits, &cfg)?;
    iq::write_iq_file(out, &tx, &format!("ble adv channel {channel}"))?;

    // whitened on-air body (after preamble + access address), for
    // pinning golden vectors
    let body = packet.bits.to_bytes_msb_first();
    println!("crc24_hex {}", hex::encode(packet.crc));
    println!(
        "onair_bits {} samples {} sample_rate_hz {}",
        packet.bits.len(),
        tx.len(),
        tx.sample_rate_hz
    );
    println!("onair_msb_hex {}", hex::encode(body));
    Ok(())
}

#[derive(Deserialize)]
struct OtaSessionSpec {
    image_path: Option<PathBuf>,
    /// Alternative to image_path: transfer a raw payload of this many
    /// bytes (an externally compressed stream).
    payload_bytes: Option<usize>,
    loss_prob: f64,
    seed: u64,
    sf: u8,
    bw_hz: f64,
    cr: u8,
    #[serde(default = "default_payload_size")]
    payload_size: usize,
    #[serde(default = "default_preamble")]
    preamble: u32,
    power_model: Option<PowerModel>,
    #[serde(default)]
    wake_time_s: f64,
}

fn default_payload_size() -> usize {
    60
}
fn default_preamble() -> u32 {
    8
}

fn cmd_ota_sim(session: &str, out: &PathBuf) -> Result<Option<ExitCode>> {
    let spec: OtaSessionSpec = load_json(session, "session config")?;
    let lora = LoraParams::new(spec.sf, spec.bw_hz, 1)?
        .with_coding_rate(spec.cr)?
        .with_preamble_len(spec.preamble);
    let source = match (&spec.image_path, spec.payload_bytes) {
        (Some(path), None) => {
            let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            TransferSource::Image(FirmwareImage::new(FirmwareKind::FpgaBitstream, data)?)
        }
        (None, Some(bytes)) => TransferSource::RawPayload { bytes },
        _ => bail!("exactly one of image_path or payload_bytes must be set"),
    };
    let mut cfg = SessionConfig::new(lora, source);
    cfg.payload_size = spec.payload_size;
    cfg.loss_prob = spec.loss_prob;
    cfg.seed = spec.seed;
    cfg.wake_time_s = spec.wake_time_s;
    if let Some(power) = spec.power_model {
        cfg.timing.power = power;
    }
    let run = simulate_session(cfg)?;
    std::fs::write(out, serde_json::to_string_pretty(&run.report)?)?;
    println!(
        "outcome {:?} total_time_s {:.3} node_energy_mj {:.1} packets {} retransmissions {}",
        run.report.outcome,
        run.report.total_time_s,
        run.report.node_energy_mj,
        run.report.packets_sent,
        run.report.retransmissions
    );
    if matches!(run.report.outcome, SessionOutcome::Failed { .. }) {
        return Ok(Some(ExitCode::from(3)));
    }
    Ok(None)
}

fn cmd_iq_frame(input: &PathBuf, out: &PathBuf, full_scale: f64) -> Result<()> {
    let buf = iq::read_iq_file(input)?;
    let quantized = iq::quantize(&buf, full_scale)?;
    let bits = iq::frame_words(&quantized, &WordFormat::default());
    iq::write_framed_file(out, &bits)?;
    println!("framed {} samples into {} bits", quantized.len(), bits.len());
    Ok(())
}

fn cmd_iq_deframe(input: &PathBuf, out: &PathBuf, full_scale: f64, rate: u32) -> Result<()> {
    let bits = iq::read_framed_file(input)?;
    let (samples, report) = iq::deframe_words(&bits, &WordFormat::default());
    let buf: SampleBuffer = iq::dequantize(&samples, full_scale, rate)?;
    iq::write_iq_file(out, &buf, "deframed capture")?;
    println!(
        "decoded {} samples, discarded {} bits across {} ranges",
        samples.len(),
        report.discarded_bits(),
        report.discarded_bit_ranges.len()
    );
    Ok(())
}

fn run() -> Result<Option<ExitCode>> {
    let cli = Cli::parse();
    match cli.command {
        Command::LoraMod {
            config,
            payload_hex,
            out,
        } => cmd_lora_mod(&config, &payload_hex, &out).map(|()| None),
        Command::LoraDemod {
            config,
            input,
            json,
        } => cmd_lora_demod(&config, &input, json),
        Command::SerSweep { spec, out, threads } => {
            sweep::cmd_ser_sweep(&spec, &out, threads).map(|()| None)
        }
        Command::BleBeacon { pdu, channel, out } => {
            cmd_ble_beacon(&pdu, channel, &out).map(|()| None)
        }
        Command::ConcurrentDemo {
            configs,
            snr_a,
            snr_b,
            out,
            trials,
            seed,
        } => sweep::cmd_concurrent_demo(
            &configs,
            snr_a,
            snr_b,
            &out,
            trials,
            seed.unwrap_or_else(default_seed),
        )
        .map(|()| None),
        Command::OtaSim { session, out } => cmd_ota_sim(&session, &out),
        Command::Iq { direction } => match direction {
            IqDirection::Frame {
                input,
                out,
                full_scale,
            } => cmd_iq_frame(&input, &out, full_scale).map(|()| None),
            IqDirection::Deframe {
                input,
                out,
                full_scale,
                sample_rate_hz,
            } => cmd_iq_deframe(&input, &out, full_scale, sample_rate_hz).map(|()| None),
        },
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(code)) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
