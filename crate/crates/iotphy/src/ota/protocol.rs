//! Transfer protocol: packet formats, CRC-16 and the pure AP/node state
//! machines.
//!
//! The AP sequence is REQUEST (device ids and wake time), then one DATA
//! packet at a time, each acknowledged before the next, then END. A
//! packet whose ACK does not arrive within the timeout is retransmitted;
//! the node re-ACKs duplicates without rewriting flash.

use serde::{Deserialize, Serialize};

/// Retransmission ceiling per packet before the session is declared
/// failed (non-terminating).
pub const RETRY_CEILING: u32 = 100;

/// CRC-16/CCITT (poly 0x1021, init 0xFFFF, no reflection).
pub fn crc16(data: &[u8]) -> u16 {
    let mut crc = 0xFFFFu16;
    for &byte in data {
        crc ^= u16::from(byte) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OtaPacketKind {
    Request,
    Ready,
    Data,
    Ack,
    End,
}

/// One protocol packet. The wire encoding (what the airtime model sees)
/// is `kind | seq | kind-specific fields | payload | crc16`.
#[derive(Debug, Clone, PartialEq)]
pub struct OtaPacket {
    pub kind: OtaPacketKind,
    pub seq: u32,
    /// REQUEST only: nodes being programmed.
    pub device_ids: Vec<u16>,
    /// REQUEST only: when the node should wake and send READY (absolute
    /// session time, seconds).
    pub wake_time_s: f64,
    /// REQUEST only: how many DATA packets the transfer will carry.
    pub total_data_packets: u32,
    /// DATA only, at most the configured payload size.
    pub payload: Vec<u8>,
    pub crc16: u16,
}

impl OtaPacket {
    pub fn request(device_ids: Vec<u16>, wake_time_s: f64, total_data_packets: u32) -> Self {
        Self::finish(Self {
            kind: OtaPacketKind::Request,
            seq: 0,
            device_ids,
            wake_time_s,
            total_data_packets,
            payload: Vec::new(),
            crc16: 0,
        })
    }

    pub fn ready() -> Self {
        Self::finish(Self {
            kind: OtaPacketKind::Ready,
            seq: 0,
            device_ids: Vec::new(),
            wake_time_s: 0.0,
            total_data_packets: 0,
            payload: Vec::new(),
            crc16: 0,
        })
    }

    pub fn data(seq: u32, payload: Vec<u8>) -> Self {
        Self::finish(Self {
            kind: OtaPacketKind::Data,
            seq,
            device_ids: Vec::new(),
            wake_time_s: 0.0,
            total_data_packets: 0,
            payload,
            crc16: 0,
        })
    }

    pub fn ack(seq: u32) -> Self {
        Self::finish(Self {
            kind: OtaPacketKind::Ack,
            seq,
            device_ids: Vec::new(),
            wake_time_s: 0.0,
            total_data_packets: 0,
            payload: Vec::new(),
            crc16: 0,
        })
    }

    pub fn end(seq: u32) -> Self {
        Self::finish(Self {
            kind: OtaPacketKind::End,
            seq,
            device_ids: Vec::new(),
            wake_time_s: 0.0,
            total_data_packets: 0,
            payload: Vec::new(),
            crc16: 0,
        })
    }

    fn finish(mut self) -> Self {
        self.crc16 = crc16(&self.body_bytes());
        self
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.payload.len());
        out.push(match self.kind {
            OtaPacketKind::Request => 0,
            OtaPacketKind::Ready => 1,
            OtaPacketKind::Data => 2,
            OtaPacketKind::Ack => 3,
            OtaPacketKind::End => 4,
        });
        out.extend_from_slice(&self.seq.to_le_bytes());
        if self.kind == OtaPacketKind::Request {
            out.push(self.device_ids.len() as u8);
            for id in &self.device_ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
            out.extend_from_slice(&self.wake_time_s.to_le_bytes());
            out.extend_from_slice(&self.total_data_packets.to_le_bytes());
        }
        out.extend_from_slice(&(self.payload.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Full wire encoding, body plus trailing CRC.
    pub fn wire_bytes(&self) -> Vec<u8> {
        let mut out = self.body_bytes();
        out.extend_from_slice(&self.crc16.to_le_bytes());
        out
    }

    pub fn wire_len(&self) -> usize {
        self.body_bytes().len() + 2
    }

    pub fn crc_ok(&self) -> bool {
        crc16(&self.body_bytes()) == self.crc16
    }
}

/// Events fed into either state machine.
#[derive(Debug, Clone, PartialEq)]
pub enum MachineEvent {
    PacketReceived(OtaPacket),
    /// The retransmission (AP) or inactivity (node) timeout fired.
    Timeout,
    /// A scheduled timer fired (wake timer, reprogram completion).
    TimerFired,
}

/// Side effects requested by a state machine step; the simulation (or a
/// real radio driver) carries them out.
#[derive(Debug, Clone, PartialEq)]
pub enum OtaAction {
    Send(OtaPacket),
    WriteFlash { offset: usize, data: Vec<u8> },
    /// (Re)arm the caller's timeout for this machine.
    StartTimer { duration_s: f64 },
    CancelTimer,
    /// Begin decompressing and reprogramming; finishes on `TimerFired`.
    Reprogram,
    Sleep { until_s: f64 },
    /// The retry ceiling was exhausted; the session is non-terminating.
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApPhase {
    Idle,
    AwaitReady,
    Transfer,
    Done,
    Failed,
}

/// Access-point side: drives the transfer, one outstanding DATA packet
/// at a time (stop-and-wait).
#[derive(Debug)]
pub struct ApMachine {
    pub phase: ApPhase,
    packets: Vec<Vec<u8>>,
    next_seq: u32,
    retries: u32,
    device_ids: Vec<u16>,
    wake_time_s: f64,
    timeout_s: f64,
    /// Exponential backoff cap as a multiple of the base timeout.
    backoff_cap: u32,
    pub retransmissions: u64,
    pub protocol_violations: u64,
}

impl ApMachine {
    pub fn new(packets: Vec<Vec<u8>>, device_ids: Vec<u16>, wake_time_s: f64, timeout_s: f64) -> Self {
        Self {
            phase: ApPhase::Idle,
            packets,
            next_seq: 0,
            retries: 0,
            device_ids,
            wake_time_s,
            timeout_s,
            backoff_cap: 8,
            retransmissions: 0,
            protocol_violations: 0,
        }
    }

    pub fn total_data_packets(&self) -> u32 {
        self.packets.len() as u32
    }

    fn backoff_timeout(&self) -> f64 {
        let factor = 1u32 << self.retries.min(self.backoff_cap.trailing_zeros());
        self.timeout_s * f64::from(factor.min(self.backoff_cap))
    }

    /// Kick off the session: send REQUEST and arm the READY timeout.
    pub fn start(&mut self) -> Vec<OtaAction> {
        self.phase = ApPhase::AwaitReady;
        vec![
            OtaAction::Send(OtaPacket::request(
                self.device_ids.clone(),
                self.wake_time_s,
                self.total_data_packets(),
            )),
            OtaAction::StartTimer {
                duration_s: self.backoff_timeout(),
            },
        ]
    }

    fn send_current(&mut self) -> Vec<OtaAction> {
        if (self.next_seq as usize) < self.packets.len() {
            vec![
                OtaAction::Send(OtaPacket::data(
                    self.next_seq,
                    self.packets[self.next_seq as usize].clone(),
                )),
                OtaAction::StartTimer {
                    duration_s: self.backoff_timeout(),
                },
            ]
        } else {
            // every DATA packet acknowledged: announce the end and stop
            self.phase = ApPhase::Done;
            vec![
                OtaAction::CancelTimer,
                OtaAction::Send(OtaPacket::end(self.next_seq)),
            ]
        }
    }

    pub fn step(&mut self, event: MachineEvent) -> Vec<OtaAction> {
        match (self.phase, event) {
            (ApPhase::AwaitReady, MachineEvent::PacketReceived(p)) => {
                if p.kind == OtaPacketKind::Ready && p.crc_ok() {
                    self.phase = ApPhase::Transfer;
                    self.retries = 0;
                    self.send_current()
                } else {
                    self.protocol_violations += 1;
                    vec![]
                }
            }
            (ApPhase::Transfer, MachineEvent::PacketReceived(p)) => {
                if p.kind == OtaPacketKind::Ack && p.crc_ok() && p.seq == self.next_seq {
                    self.next_seq += 1;
                    self.retries = 0;
                    self.send_current()
                } else if p.kind == OtaPacketKind::Ack && p.seq < self.next_seq {
                    vec![] // stale ACK for an already-advanced sequence
                } else {
                    self.protocol_violations += 1;
                    vec![]
                }
            }
            (ApPhase::AwaitReady, MachineEvent::Timeout) => {
                self.retries += 1;
                if self.retries > RETRY_CEILING {
                    self.phase = ApPhase::Failed;
                    return vec![OtaAction::Fail];
                }
                self.retransmissions += 1;
                vec![
                    OtaAction::Send(OtaPacket::request(
                        self.device_ids.clone(),
                        self.wake_time_s,
                        self.total_data_packets(),
                    )),
                    OtaAction::StartTimer {
                        duration_s: self.backoff_timeout(),
                    },
                ]
            }
            (ApPhase::Transfer, MachineEvent::Timeout) => {
                self.retries += 1;
                if self.retries > RETRY_CEILING {
                    self.phase = ApPhase::Failed;
                    return vec![OtaAction::Fail];
                }
                self.retransmissions += 1;
                vec![
                    OtaAction::Send(OtaPacket::data(
                        self.next_seq,
                        self.packets[self.next_seq as usize].clone(),
                    )),
                    OtaAction::StartTimer {
                        duration_s: self.backoff_timeout(),
                    },
                ]
            }
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodePhase {
    Idle,
    Listen,
    ReadySent,
    Transfer,
    Reprogram,
    Done,
}

/// Node side: writes verified in-order DATA to flash at `payload_size *
/// seq`, re-ACKs duplicates, and reprograms on END (or after the
/// inactivity timeout once every packet has arrived, in case END is
/// lost).
#[derive(Debug)]
pub struct NodeMachine {
    pub phase: NodePhase,
    pub device_id: u16,
    payload_size: usize,
    pub next_expected_seq: u32,
    total_data_packets: u32,
    pub flash_cursor: usize,
    pub duplicates_reacked: u64,
    pub protocol_violations: u64,
    inactivity_timeout_s: f64,
}

impl NodeMachine {
    pub fn new(device_id: u16, payload_size: usize, inactivity_timeout_s: f64) -> Self {
        Self {
            phase: NodePhase::Listen,
            device_id,
            payload_size,
            next_expected_seq: 0,
            total_data_packets: u32::MAX,
            flash_cursor: 0,
            duplicates_reacked: 0,
            protocol_violations: 0,
            inactivity_timeout_s,
        }
    }

    fn all_data_received(&self) -> bool {
        self.total_data_packets != u32::MAX && self.next_expected_seq >= self.total_data_packets
    }

    fn begin_reprogram(&mut self) -> Vec<OtaAction> {
        self.phase = NodePhase::Reprogram;
        vec![OtaAction::CancelTimer, OtaAction::Reprogram]
    }

    pub fn step(&mut self, event: MachineEvent) -> Vec<OtaAction> {
        match (self.phase, event) {
            (NodePhase::Listen, MachineEvent::PacketReceived(p))
                if p.kind == OtaPacketKind::Request && p.crc_ok() =>
            {
                if !p.device_ids.contains(&self.device_id) {
                    return vec![]; // someone else's update
                }
                self.total_data_packets = p.total_data_packets;
                self.phase = NodePhase::ReadySent;
                if p.wake_time_s > 0.0 {
                    vec![
                        OtaAction::Sleep {
                            until_s: p.wake_time_s,
                        },
                        OtaAction::Send(OtaPacket::ready()),
                    ]
                } else {
                    vec![OtaAction::Send(OtaPacket::ready())]
                }
            }
            (NodePhase::ReadySent, MachineEvent::PacketReceived(p))
                if p.kind == OtaPacketKind::Request && p.crc_ok() =>
            {
                // READY was lost and the AP asked again
                vec![OtaAction::Send(OtaPacket::ready())]
            }
            (NodePhase::ReadySent | NodePhase::Transfer, MachineEvent::PacketReceived(p))
                if p.kind == OtaPacketKind::Data =>
            {
                if !p.crc_ok() {
                    self.protocol_violations += 1;
                    return vec![]; // corrupt: stay silent, AP will retry
                }
                self.phase = NodePhase::Transfer;
                let mut actions = Vec::new();
                if p.seq == self.next_expected_seq {
                    let offset = self.payload_size * p.seq as usize;
                    self.flash_cursor = offset + p.payload.len();
                    self.next_expected_seq += 1;
                    actions.push(OtaAction::WriteFlash {
                        offset,
                        data: p.payload.clone(),
                    });
                    actions.push(OtaAction::Send(OtaPacket::ack(p.seq)));
                } else if p.seq < self.next_expected_seq {
                    self.duplicates_reacked += 1;
                    actions.push(OtaAction::Send(OtaPacket::ack(p.seq)));
                } else {
                    // a future sequence cannot happen under stop-and-wait
                    self.protocol_violations += 1;
                    return vec![];
                }
                if self.all_data_received() {
                    // guard against a lost END: finish after quiet time
                    actions.push(OtaAction::StartTimer {
                        duration_s: self.inactivity_timeout_s,
                    });
                }
                actions
            }
            (NodePhase::Transfer, MachineEvent::PacketReceived(p))
                if p.kind == OtaPacketKind::End && p.crc_ok() =>
            {
                self.begin_reprogram()
            }
            (NodePhase::Transfer, MachineEvent::Timeout) if self.all_data_received() => {
                self.begin_reprogram()
            }
            (NodePhase::Reprogram, MachineEvent::TimerFired) => {
                self.phase = NodePhase::Done;
                vec![OtaAction::Sleep { until_s: f64::MAX }]
            }
            (_, MachineEvent::PacketReceived(_)) => {
                self.protocol_violations += 1;
                vec![]
            }
            _ => vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc16_known_vector() {
        // CRC-16/CCITT-FALSE check value for "123456789"
        assert_eq!(crc16(b"123456789"), 0x29B1);
        assert_eq!(crc16(&[]), 0xFFFF);
    }

    #[test]
    fn packet_crc_roundtrip() {
        let p = OtaPacket::data(7, vec![1, 2, 3]);
        assert!(p.crc_ok());
        let mut bad = p.clone();
        bad.payload[0] ^= 0xFF;
        assert!(!bad.crc_ok());
    }

    #[test]
    fn wire_length_includes_fields() {
        let p = OtaPacket::data(0, vec![0; 60]);
        // kind(1) + seq(4) + len(2) + payload(60) + crc(2)
        assert_eq!(p.wire_len(), 69);
        assert_eq!(p.wire_bytes().len(), 69);
    }

    fn drive_nominal(payloads: Vec<Vec<u8>>) -> (ApMachine, NodeMachine, Vec<OtaPacketKind>) {
        let mut ap = ApMachine::new(payloads, vec![1], 0.0, 1.0);
        let mut node = NodeMachine::new(1, 60, 5.0);
        let mut trace = Vec::new();
        let mut inflight: Vec<(bool, OtaPacket)> = ap
            .start()
            .into_iter()
            .filter_map(|a| match a {
                OtaAction::Send(p) => Some((true, p)),
                _ => None,
            })
            .collect();
        let mut guard = 0;
        while let Some((to_node, packet)) = inflight.pop() {
            guard += 1;
            assert!(guard < 1000, "machine loop runaway");
            trace.push(packet.kind);
            let actions = if to_node {
                node.step(MachineEvent::PacketReceived(packet))
            } else {
                ap.step(MachineEvent::PacketReceived(packet))
            };
            for a in actions {
                match a {
                    OtaAction::Send(p) => inflight.push((!to_node, p)),
                    OtaAction::Reprogram => {
                        let done = node.step(MachineEvent::TimerFired);
                        assert!(matches!(done[0], OtaAction::Sleep { .. }));
                    }
                    _ => {}
                }
            }
        }
        (ap, node, trace)
    }

    #[test]
    fn nominal_three_packet_trace() {
        let (ap, node, trace) = drive_nominal(vec![vec![1; 60], vec![2; 60], vec![3; 30]]);
        use OtaPacketKind::*;
        assert_eq!(
            trace,
            vec![Request, Ready, Data, Ack, Data, Ack, Data, Ack, End]
        );
        assert_eq!(ap.phase, ApPhase::Done);
        assert_eq!(node.phase, NodePhase::Done);
        assert_eq!(ap.retransmissions, 0);
        assert_eq!(node.next_expected_seq, 3);
    }

    #[test]
    fn duplicate_data_reacked_once_written() {
        let mut node = NodeMachine::new(1, 60, 5.0);
        node.step(MachineEvent::PacketReceived(OtaPacket::request(
            vec![1],
            0.0,
            2,
        )));
        let first = node.step(MachineEvent::PacketReceived(OtaPacket::data(0, vec![9; 60])));
        assert!(matches!(first[0], OtaAction::WriteFlash { offset: 0, .. }));
        let dup = node.step(MachineEvent::PacketReceived(OtaPacket::data(0, vec![9; 60])));
        // re-ACK without a second write
        assert_eq!(dup.len(), 1);
        assert!(matches!(dup[0], OtaAction::Send(ref p) if p.kind == OtaPacketKind::Ack && p.seq == 0));
        assert_eq!(node.duplicates_reacked, 1);
    }

    #[test]
    fn data_before_ready_is_a_violation() {
        let mut node = NodeMachine::new(1, 60, 5.0);
        let actions = node.step(MachineEvent::PacketReceived(OtaPacket::data(0, vec![1; 10])));
        assert!(actions.is_empty());
        assert_eq!(node.phase, NodePhase::Listen);
        assert_eq!(node.protocol_violations, 1);
    }

    #[test]
    fn ap_fails_after_retry_ceiling() {
        let mut ap = ApMachine::new(vec![vec![0; 60]], vec![1], 0.0, 1.0);
        ap.start();
        let mut last = Vec::new();
        for _ in 0..=RETRY_CEILING {
            last = ap.step(MachineEvent::Timeout);
        }
        assert_eq!(ap.phase, ApPhase::Failed);
        assert_eq!(last, vec![OtaAction::Fail]);
    }

    #[test]
    fn node_finishes_on_inactivity_when_end_lost() {
        let mut node = NodeMachine::new(1, 60, 5.0);
        node.step(MachineEvent::PacketReceived(OtaPacket::request(
            vec![1],
            0.0,
            1,
        )));
        let actions = node.step(MachineEvent::PacketReceived(OtaPacket::data(0, vec![4; 20])));
        assert!(actions
            .iter()
            .any(|a| matches!(a, OtaAction::StartTimer { .. })));
        let timeout_actions = node.step(MachineEvent::Timeout);
        assert!(timeout_actions.contains(&OtaAction::Reprogram));
        assert_eq!(node.phase, NodePhase::Reprogram);
    }
}
