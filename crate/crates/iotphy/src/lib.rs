//! Software baseband toolkit for low-power IoT endpoints.
//!
//! The crate bundles the signal-processing and protocol machinery of a
//! small I/Q-sample radio platform in pure software:
//!
//! - [`iq`]: complex baseband sample types, 13-bit quantization, the
//!   radio's 32-bit serial I/Q word codec and raw I/Q file I/O
//! - [`lora`]: a LoRa chirp-spread-spectrum modulator/demodulator,
//!   packet framing, airtime model and a concurrent orthogonal-slope
//!   decoder
//! - [`ble`]: BLE advertising-beacon assembly (CRC-24, whitening) and
//!   GFSK baseband synthesis
//! - [`channel`]: AWGN, multi-source combining and a packet erasure
//!   channel, all seeded for reproducibility
//! - [`ota`]: block compression, stop-and-wait transfer state machines
//!   and a discrete-event simulation of the over-the-air firmware
//!   update protocol

pub mod bits;
pub mod ble;
pub mod channel;
pub mod iq;
pub mod lora;
pub mod ota;

pub use bits::BitBuffer;
pub use iq::{ComplexSample, SampleBuffer};
