//! Byte-oriented LZ77 block codec sized for a small MCU.
//!
//! Firmware is split into 30 kB blocks and each block is compressed
//! independently, so the decompressor never needs more working memory
//! than one uncompressed block. The stream is a sequence of tokens:
//!
//! ```text
//! 0x00..=0x7F          literal run of (token + 1) bytes, bytes follow
//! 0x80 | L             match of length 3 + L at a 16-bit LE distance;
//!                      L = 0x7F adds extension bytes (each 0xFF adds
//!                      255, the first other byte terminates)
//! ```
//!
//! Matches may overlap their own output (distance 1 encodes a byte run).
//! Worst-case expansion is one control byte per 128 literals (< 0.8%).

use serde::{Deserialize, Serialize};

use super::{FirmwareImage, FirmwareKind, OtaError};

/// Uncompressed block size: 30 kB fits the MCU's decompression arena.
pub const BLOCK_SIZE: usize = 30_000;

const MIN_MATCH: usize = 3;
const BASE_MAX_LEN: usize = MIN_MATCH + 0x7E; // longest match without extension bytes
const HASH_BITS: u32 = 14;
const MAX_CHAIN: usize = 64;

fn hash3(data: &[u8], i: usize) -> usize {
    let v = u32::from(data[i]) | u32::from(data[i + 1]) << 8 | u32::from(data[i + 2]) << 16;
    (v.wrapping_mul(0x9E37_79B1) >> (32 - HASH_BITS)) as usize
}

/// Compress one block (at most [`BLOCK_SIZE`] bytes).
pub fn compress_block(block: &[u8]) -> Result<Vec<u8>, OtaError> {
    if block.len() > BLOCK_SIZE {
        return Err(OtaError::BlockTooLarge(block.len()));
    }
    let mut out = Vec::with_capacity(block.len() + block.len() / 128 + 16);
    let mut literal_start = 0usize;

    let mut head = vec![usize::MAX; 1 << HASH_BITS];
    let mut prev = vec![usize::MAX; block.len()];
    // last position usable as a match source: needs MIN_MATCH bytes left
    let hashable_end = block.len().saturating_sub(MIN_MATCH - 1);
    let insert = |head: &mut [usize], prev: &mut [usize], j: usize| {
        let h = hash3(block, j);
        prev[j] = head[h];
        head[h] = j;
    };

    let mut i = 0usize;
    while i < block.len() {
        let mut best_len = 0usize;
        let mut best_dist = 0usize;
        if i + MIN_MATCH <= block.len() {
            let mut candidate = head[hash3(block, i)];
            let mut chain = 0;
            let longest_possible = block.len() - i;
            while candidate != usize::MAX && chain < MAX_CHAIN {
                let mut len = 0;
                while len < longest_possible && block[candidate + len] == block[i + len] {
                    len += 1;
                }
                if len > best_len {
                    best_len = len;
                    best_dist = i - candidate;
                    if len == longest_possible {
                        break;
                    }
                }
                candidate = prev[candidate];
                chain += 1;
            }
        }

        if best_len >= MIN_MATCH && best_dist <= u16::MAX as usize {
            flush_literals(&mut out, &block[literal_start..i]);
            emit_match(&mut out, best_len, best_dist);
            for j in i..(i + best_len).min(hashable_end) {
                insert(&mut head, &mut prev, j);
            }
            i += best_len;
            literal_start = i;
        } else {
            if i < hashable_end {
                insert(&mut head, &mut prev, i);
            }
            i += 1;
        }
    }
    flush_literals(&mut out, &block[literal_start..]);
    Ok(out)
}

fn flush_literals(out: &mut Vec<u8>, mut literals: &[u8]) {
    while !literals.is_empty() {
        let take = literals.len().min(128);
        out.push((take - 1) as u8);
        out.extend_from_slice(&literals[..take]);
        literals = &literals[take..];
    }
}

fn emit_match(out: &mut Vec<u8>, len: usize, dist: usize) {
    debug_assert!((1..=u16::MAX as usize).contains(&dist));
    debug_assert!(len >= MIN_MATCH);
    if len <= BASE_MAX_LEN {
        out.push(0x80 | (len - MIN_MATCH) as u8);
    } else {
        out.push(0xFF);
        let mut rem = len - MIN_MATCH - 0x7F;
        while rem >= 255 {
            out.push(0xFF);
            rem -= 255;
        }
        out.push(rem as u8);
    }
    out.extend_from_slice(&(dist as u16).to_le_bytes());
}

/// Decompress one block. `max_len` bounds the output allocation (the
/// MCU's arena, one uncompressed block); exceeding it is an error, as is
/// any malformed token. The returned vector is allocated once at
/// `max_len` capacity and never grows.
pub fn decompress_block(data: &[u8], max_len: usize) -> Result<Vec<u8>, OtaError> {
    let mut out: Vec<u8> = Vec::with_capacity(max_len);
    let mut i = 0usize;
    while i < data.len() {
        let token = data[i];
        let token_at = i;
        i += 1;
        if token < 0x80 {
            let run = token as usize + 1;
            if i + run > data.len() {
                return Err(OtaError::Decode {
                    offset: token_at,
                    reason: "literal run past end of stream",
                });
            }
            if out.len() + run > max_len {
                return Err(OtaError::OutputOverflow(max_len));
            }
            out.extend_from_slice(&data[i..i + run]);
            i += run;
        } else {
            let mut len = MIN_MATCH + (token & 0x7F) as usize;
            if token & 0x7F == 0x7F {
                loop {
                    let ext = *data.get(i).ok_or(OtaError::Decode {
                        offset: token_at,
                        reason: "length extension past end of stream",
                    })?;
                    i += 1;
                    len += ext as usize;
                    if ext != 0xFF {
                        break;
                    }
                }
            }
            if i + 2 > data.len() {
                return Err(OtaError::Decode {
                    offset: token_at,
                    reason: "match distance past end of stream",
                });
            }
            let dist = u16::from_le_bytes([data[i], data[i + 1]]) as usize;
            i += 2;
            if dist == 0 || dist > out.len() {
                return Err(OtaError::Decode {
                    offset: token_at,
                    reason: "match distance outside produced output",
                });
            }
            if out.len() + len > max_len {
                return Err(OtaError::OutputOverflow(max_len));
            }
            // byte-by-byte so overlapping matches replicate correctly
            for _ in 0..len {
                let b = out[out.len() - dist];
                out.push(b);
            }
        }
    }
    Ok(out)
}

/// Per-block sizes needed to take a transfer apart again:
/// `(compressed_len, uncompressed_len)` in block order, plus a CRC of
/// each compressed block so a corrupted transfer aborts instead of
/// programming garbage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkManifest {
    pub kind: FirmwareKind,
    pub image_len: usize,
    pub block_sizes: Vec<(usize, usize)>,
    pub block_crcs: Vec<u16>,
    pub total_compressed: usize,
    pub packet_payload_size: usize,
}

impl ChunkManifest {
    pub fn n_blocks(&self) -> usize {
        self.block_sizes.len()
    }
}

/// A firmware image cut into compressed blocks and DATA-sized payloads.
#[derive(Debug, Clone)]
pub struct ChunkedFirmware {
    /// `(block_index, compressed bytes)` per 30 kB input block.
    pub blocks: Vec<(usize, Vec<u8>)>,
    pub manifest: ChunkManifest,
    /// The concatenated compressed stream split into packet payloads,
    /// indexed by sequence number.
    pub packets: Vec<Vec<u8>>,
}

/// Split an image into 30 kB blocks, compress each, then cut the
/// compressed stream into packet payloads with global sequence numbers.
pub fn chunk_firmware(image: &FirmwareImage, packet_payload_size: usize) -> ChunkedFirmware {
    assert!(packet_payload_size > 0);
    let mut blocks = Vec::new();
    let mut block_sizes = Vec::new();
    let mut block_crcs = Vec::new();
    let mut stream = Vec::new();
    for (index, chunk) in image.data.chunks(BLOCK_SIZE).enumerate() {
        let compressed = compress_block(chunk).expect("chunks split to BLOCK_SIZE");
        block_sizes.push((compressed.len(), chunk.len()));
        block_crcs.push(super::protocol::crc16(&compressed));
        stream.extend_from_slice(&compressed);
        blocks.push((index, compressed));
    }
    let packets = stream
        .chunks(packet_payload_size)
        .map(<[u8]>::to_vec)
        .collect();
    ChunkedFirmware {
        blocks,
        manifest: ChunkManifest {
            kind: image.kind,
            image_len: image.data.len(),
            block_sizes,
            block_crcs,
            total_compressed: stream.len(),
            packet_payload_size,
        },
        packets,
    }
}
