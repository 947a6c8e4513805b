//! BLE non-connectable advertising baseband: packet assembly with
//! CRC-24 and channel whitening, GFSK synthesis, and the three-channel
//! advertising schedule.

mod gfsk;

pub use gfsk::{gfsk_demodulate, gfsk_modulate, GfskConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitBuffer;

/// Fixed advertising preamble byte.
pub const PREAMBLE: u8 = 0xAA;
/// Fixed advertising access address.
pub const ACCESS_ADDRESS: u32 = 0x8E89BED6;
/// The three advertising channel indices.
pub const ADV_CHANNELS: [u8; 3] = [37, 38, 39];
/// PDU type nibble for a non-connectable undirected advertisement.
pub const PDU_TYPE_ADV_NONCONN_IND: u8 = 0x2;
/// CRC shift register preset.
pub const CRC_INIT: u32 = 0x555555;

#[derive(Debug, Error)]
pub enum BleError {
    #[error("advertising data is {0} bytes, limit is 31")]
    AdvDataTooLong(usize),
    #[error("payload section is {0} octets, valid advertisements are 6-37")]
    PayloadOutOfRange(usize),
    #[error("channel {0} is not a BLE channel (0-39)")]
    InvalidChannel(u8),
    #[error("advertising interval {0} ms is below the 20 ms minimum")]
    IntervalTooShort(f64),
    #[error("CRC check failed (got {got:#08x}, expected {expected:#08x})")]
    CrcMismatch { got: u32, expected: u32 },
    #[error("packet too short to strip framing ({0} bits)")]
    PacketTooShort(usize),
    #[error("GFSK oversampling must be >= 2")]
    InvalidOsr,
    #[error("modulation index {0} outside [0.45, 0.55]")]
    InvalidModulationIndex(f64),
}

/// Advertising protocol data unit: a two-byte header (type nibble and
/// payload length) followed by the 6-byte advertiser address and up to
/// 31 bytes of advertising data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleAdvPdu {
    pub pdu_type: u8,
    pub adv_address: [u8; 6],
    pub adv_data: Vec<u8>,
}

impl BleAdvPdu {
    pub fn new(adv_address: [u8; 6], adv_data: Vec<u8>) -> Result<Self, BleError> {
        if adv_data.len() > 31 {
            return Err(BleError::AdvDataTooLong(adv_data.len()));
        }
        Ok(Self {
            pdu_type: PDU_TYPE_ADV_NONCONN_IND,
            adv_address,
            adv_data,
        })
    }

    /// Length of the payload section (address plus data), 6-37 octets.
    pub fn payload_len(&self) -> usize {
        6 + self.adv_data.len()
    }

    /// Serialize header plus payload, the byte sequence the CRC covers.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.payload_len());
        out.push(self.pdu_type & 0x0F);
        out.push(self.payload_len() as u8);
        out.extend_from_slice(&self.adv_address);
        out.extend_from_slice(&self.adv_data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BleError> {
        if bytes.len() < 8 {
            return Err(BleError::PayloadOutOfRange(bytes.len().saturating_sub(2)));
        }
        let payload_len = bytes[1] as usize;
        if !(6..=37).contains(&payload_len) || bytes.len() != 2 + payload_len {
            return Err(BleError::PayloadOutOfRange(payload_len));
        }
        let mut adv_address = [0u8; 6];
        adv_address.copy_from_slice(&bytes[2..8]);
        Ok(Self {
            pdu_type: bytes[0] & 0x0F,
            adv_address,
            adv_data: bytes[8..].to_vec(),
        })
    }
}

/// A fully assembled advertisement ready for modulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleAdvPacket {
    pub pdu: BleAdvPdu,
    pub crc: [u8; 3],
    pub channel: u8,
    /// On-air bit sequence: preamble, access address, whitened PDU+CRC.
    pub bits: BitBuffer,
}

/// CRC-24 over the PDU bytes (header first, each byte LSB first):
/// 24-bit LFSR with polynomial x^24+x^10+x^9+x^6+x^4+x^3+x+1, preset to
/// 0x555555. The final register state is the CRC.
pub fn crc24(pdu_bytes: &[u8]) -> u32 {
    const POLY_MASK: u32 = 0x00065B; // taps x^10,x^9,x^6,x^4,x^3,x^1,x^0
    let mut state = CRC_INIT;
    for &byte in pdu_bytes {
        for i in 0..8 {
            let bit = (byte >> i) & 1 == 1;
            let feedback = bit ^ ((state >> 23) & 1 == 1);
            state = (state << 1) & 0xFF_FFFF;
            if feedback {
                state ^= POLY_MASK;
            }
        }
    }
    state
}

/// CRC register state serialized low byte first.
pub fn crc24_bytes(pdu_bytes: &[u8]) -> [u8; 3] {
    let c = crc24(pdu_bytes);
    [(c & 0xFF) as u8, ((c >> 8) & 0xFF) as u8, ((c >> 16) & 0xFF) as u8]
}

/// Channel whitening: XOR the byte stream (LSB first per byte) with the
/// keystream of a 7-bit LFSR, polynomial x^7+x^4+1, seeded with the
/// lower 7 bits of the channel number (register bit k = channel bit k).
/// Whitening is its own inverse.
pub fn whiten(bytes: &[u8], channel: u8) -> Result<Vec<u8>, BleError> {
    if channel > 39 {
        return Err(BleError::InvalidChannel(channel));
    }
    let mut lfsr = Whitener::new(channel);
    Ok(bytes
        .iter()
        .map(|&byte| {
            let mut out = 0u8;
            for i in 0..8 {
                let w = lfsr.next_bit() as u8;
                out |= (((byte >> i) & 1) ^ w) << i;
            }
            out
        })
        .collect())
}

struct Whitener {
    state: u8,
}

impl Whitener {
    fn new(channel: u8) -> Self {
        Self {
            state: channel & 0x7F,
        }
    }

    fn next_bit(&mut self) -> bool {
        let out = (self.state >> 6) & 1 == 1;
        self.state = (self.state << 1) & 0x7F;
        if out {
            self.state ^= 0x11; // taps x^4, x^0
        }
        out
    }
}

/// Raw whitening keystream for a channel, packed LSB-first per byte
/// (whitening an all-zero stream yields exactly these bytes).
pub fn whitening_keystream(channel: u8, n_bytes: usize) -> Result<Vec<u8>, BleError> {
    whiten(&vec![0u8; n_bytes], channel)
}

/// Assemble the on-air bitstream: preamble and access address in the
/// clear, then the whitened PDU and CRC. All bytes go out LSB first; the
/// access address is serialized least-significant byte first.
pub fn assemble_packet(pdu: &BleAdvPdu, channel: u8) -> Result<BleAdvPacket, BleError> {
    if !ADV_CHANNELS.contains(&channel) {
        return Err(BleError::InvalidChannel(channel));
    }
    let payload_len = pdu.payload_len();
    if !(6..=37).contains(&payload_len) {
        return Err(BleError::PayloadOutOfRange(payload_len));
    }

    let pdu_bytes = pdu.to_bytes();
    let crc = crc24_bytes(&pdu_bytes);

    let mut clear = pdu_bytes;
    clear.extend_from_slice(&crc);
    let whitened = whiten(&clear, channel)?;

    let mut bits = BitBuffer::with_capacity(8 + 32 + whitened.len() * 8);
    bits.push_byte_lsb_first(PREAMBLE);
    for byte in ACCESS_ADDRESS.to_le_bytes() {
        bits.push_byte_lsb_first(byte);
    }
    for byte in &whitened {
        bits.push_byte_lsb_first(*byte);
    }

    Ok(BleAdvPacket {
        pdu: pdu.clone(),
        crc,
        channel,
        bits,
    })
}

/// Test-side receiver for [`assemble_packet`]: strip preamble and access
/// address, de-whiten, verify the CRC and recover the PDU.
pub fn disassemble_packet(bits: &BitBuffer, channel: u8) -> Result<BleAdvPdu, BleError> {
    if bits.len() < 40 + 8 * 5 {
        return Err(BleError::PacketTooShort(bits.len()));
    }
    let body_bits = bits.len() - 40;
    if body_bits % 8 != 0 {
        return Err(BleError::PacketTooShort(bits.len()));
    }
    let mut body = Vec::with_capacity(body_bits / 8);
    for b in 0..body_bits / 8 {
        let mut byte = 0u8;
        for i in 0..8 {
            byte |= (bits.get(40 + b * 8 + i) as u8) << i;
        }
        body.push(byte);
    }
    let clear = whiten(&body, channel)?;
    let (pdu_bytes, crc_bytes) = clear.split_at(clear.len() - 3)
        ;
    let expected = crc24(pdu_bytes);
    let got = crc_bytes[0] as u32 | (crc_bytes[1] as u32) << 8 | (crc_bytes[2] as u32) << 16;
    if got != expected {
        return Err(BleError::CrcMismatch { got, expected });
    }
    BleAdvPdu::from_bytes(pdu_bytes)
}

/// One advertising transmission opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvEvent {
    pub channel: u8,
    pub start_time_us: u64,
}

/// Frequency hop gap between the three per-burst transmissions.
pub const DEFAULT_HOP_GAP_US: u64 = 220;
/// Shortest advertising interval the schedule accepts.
pub const MIN_INTERVAL_MS: f64 = 20.0;

/// Lay out advertising bursts: every interval, one transmission on each
/// of channels 37, 38 and 39, separated by the hop gap.
pub fn advertising_schedule(
    interval_ms: f64,
    start_time_us: u64,
    n_bursts: usize,
    hop_gap_us: u64,
) -> Result<Vec<AdvEvent>, BleError> {
    if interval_ms < MIN_INTERVAL_MS {
        return Err(BleError::IntervalTooShort(interval_ms));
    }
    let interval_us = (interval_ms * 1000.0).round() as u64;
    let mut events = Vec::with_capacity(n_bursts * 3);
    for burst in 0..n_bursts as u64 {
        for (hop, &channel) in ADV_CHANNELS.iter().enumerate() {
            events.push(AdvEvent {
                channel,
                start_time_us: start_time_us + burst * interval_us + hop as u64 * hop_gap_us,
            });
        }
    }
    Ok(events)
}
