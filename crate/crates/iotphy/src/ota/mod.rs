//! Over-the-air firmware update: block compression sized for a small
//! MCU, a stop-and-wait transfer protocol with per-packet ACKs, flash
//! and timing/energy models, and a discrete-event session simulator.

mod lzblock;
mod protocol;
mod sim;

pub use lzblock::{
    chunk_firmware, compress_block, decompress_block, ChunkManifest, ChunkedFirmware, BLOCK_SIZE,
};
pub use protocol::{
    crc16, ApMachine, ApPhase, MachineEvent, NodeMachine, NodePhase, OtaAction, OtaPacket,
    OtaPacketKind, RETRY_CEILING,
};
pub use sim::{
    simulate_session, NodeRadioState, PowerModel, SessionConfig, SessionOutcome, SessionReport,
    SessionRun, StateInterval, TimingEnergyModel, TraceEntry, TransferSource,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OtaError {
    #[error("firmware image must be non-empty")]
    EmptyImage,
    #[error("block of {0} bytes exceeds the {max} byte limit", max = BLOCK_SIZE)]
    BlockTooLarge(usize),
    #[error("malformed compressed stream at offset {offset}: {reason}")]
    Decode { offset: usize, reason: &'static str },
    #[error("decompressed output would exceed the {0} byte allocation")]
    OutputOverflow(usize),
    #[error("flash write of {len} bytes at {offset} exceeds capacity {capacity}")]
    FlashOverflow {
        offset: usize,
        len: usize,
        capacity: usize,
    },
    #[error("block {0} missing from flash (transfer incomplete)")]
    MissingBlock(usize),
    #[error("block {index} failed to decode: {source}")]
    BlockDecode {
        index: usize,
        source: Box<OtaError>,
    },
    #[error("reassembled image is {got} bytes, manifest says {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("session configuration invalid: {0}")]
    BadConfig(String),
}

/// What kind of program a firmware image carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirmwareKind {
    FpgaBitstream,
    McuProgram,
}

/// A firmware update payload. FPGA bitstreams are nominally in the
/// 579 kB class; the size is not enforced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareImage {
    pub kind: FirmwareKind,
    pub data: Vec<u8>,
}

impl FirmwareImage {
    pub fn new(kind: FirmwareKind, data: Vec<u8>) -> Result<Self, OtaError> {
        if data.is_empty() {
            return Err(OtaError::EmptyImage);
        }
        Ok(Self { kind, data })
    }
}

/// Default flash capacity: 8 MiB, room for several bitstreams.
pub const FLASH_CAPACITY: usize = 8 * 1024 * 1024;

/// Byte-addressable flash with a write log. The transfer area holds the
/// incoming compressed stream; the programmed image lives in its own
/// slot so a failed update leaves the previous firmware intact.
#[derive(Debug, Clone)]
pub struct FlashModel {
    capacity_bytes: usize,
    contents: Vec<u8>,
    write_log: Vec<(usize, usize)>,
    programmed: Option<FirmwareImage>,
}

impl Default for FlashModel {
    fn default() -> Self {
        Self::new(FLASH_CAPACITY)
    }
}

impl FlashModel {
    pub fn new(capacity_bytes: usize) -> Self {
        Self {
            capacity_bytes,
            contents: vec![0; capacity_bytes],
            write_log: Vec::new(),
            programmed: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity_bytes
    }

    pub fn write(&mut self, offset: usize, data: &[u8]) -> Result<(), OtaError> {
        let end = offset.checked_add(data.len()).ok_or(OtaError::FlashOverflow {
            offset,
            len: data.len(),
            capacity: self.capacity_bytes,
        })?;
        if end > self.capacity_bytes {
            return Err(OtaError::FlashOverflow {
                offset,
                len: data.len(),
                capacity: self.capacity_bytes,
            });
        }
        self.contents[offset..end].copy_from_slice(data);
        self.write_log.push((offset, data.len()));
        Ok(())
    }

    pub fn read(&self, offset: usize, len: usize) -> &[u8] {
        &self.contents[offset..offset + len]
    }

    pub fn write_log(&self) -> &[(usize, usize)] {
        &self.write_log
    }

    /// True when every byte of `range` has been written at least once.
    pub fn covered(&self, range: std::ops::Range<usize>) -> bool {
        if range.is_empty() {
            return true;
        }
        let mut intervals: Vec<(usize, usize)> = self
            .write_log
            .iter()
            .map(|&(o, l)| (o, o + l))
            .filter(|&(s, e)| e > range.start && s < range.end)
            .collect();
        intervals.sort_unstable();
        let mut reached = range.start;
        for (s, e) in intervals {
            if s > reached {
                return false;
            }
            reached = reached.max(e);
            if reached >= range.end {
                return true;
            }
        }
        reached >= range.end
    }

    pub fn programmed_image(&self) -> Option<&FirmwareImage> {
        self.programmed.as_ref()
    }

    pub fn set_programmed_image(&mut self, image: FirmwareImage) {
        self.programmed = Some(image);
    }
}

/// Decompress every block named by the manifest from flash, stitch the
/// image back together and program it. A missing block or a decode
/// failure aborts and keeps the previously programmed image.
pub fn reassemble_and_program(
    flash: &mut FlashModel,
    manifest: &ChunkManifest,
) -> Result<FirmwareImage, OtaError> {
    let mut image = Vec::with_capacity(manifest.image_len);
    let mut offset = 0usize;
    for (index, &(comp_len, uncomp_len)) in manifest.block_sizes.iter().enumerate() {
        if !flash.covered(offset..offset + comp_len) {
            return Err(OtaError::MissingBlock(index));
        }
        let compressed = flash.read(offset, comp_len);
        if protocol::crc16(compressed) != manifest.block_crcs[index] {
            return Err(OtaError::BlockDecode {
                index,
                source: Box::new(OtaError::Decode {
                    offset: 0,
                    reason: "block CRC mismatch",
                }),
            });
        }
        let block = decompress_block(compressed, uncomp_len).map_err(|e| OtaError::BlockDecode {
            index,
            source: Box::new(e),
        })?;
        if block.len() != uncomp_len {
            return Err(OtaError::BlockDecode {
                index,
                source: Box::new(OtaError::LengthMismatch {
                    got: block.len(),
                    expected: uncomp_len,
                }),
            });
        }
        image.extend_from_slice(&block);
        offset += comp_len;
    }
    if image.len() != manifest.image_len {
        return Err(OtaError::LengthMismatch {
            got: image.len(),
            expected: manifest.image_len,
        });
    }
    let image = FirmwareImage::new(manifest.kind, image)?;
    flash.set_programmed_image(image.clone());
    Ok(image)
}
