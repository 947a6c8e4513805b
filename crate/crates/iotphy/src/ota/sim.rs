//! Discrete-event simulation of one update session over a lossy link.
//!
//! A single-threaded loop owns the AP and node machines, the node's
//! flash, the erasure channel and the clock. Radio time comes from the
//! LoRa airtime model; turnaround delays separate each transmission from
//! the event that triggered it. The node's radio state is logged as
//! contiguous intervals so energy can be integrated (and re-checked)
//! from the log alone.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::channel::ErasureChannel;
use crate::lora::{airtime, LoraParams};

use super::protocol::{
    ApMachine, ApPhase, MachineEvent, NodeMachine, NodePhase, OtaAction, OtaPacket, OtaPacketKind,
};
use super::{chunk_firmware, ChunkManifest, FirmwareImage, FlashModel, OtaError, BLOCK_SIZE};

/// Radio/MCU power by state, watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub tx_w: f64,
    pub rx_w: f64,
    pub idle_w: f64,
    pub sleep_w: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        // calibrated to a LoRa backbone radio plus MCU: tens of mW in
        // RX, ~100 mW at moderate TX power, 30 uW asleep
        Self {
            tx_w: 0.100,
            rx_w: 0.050,
            idle_w: 0.005,
            sleep_w: 30e-6,
        }
    }
}

/// Switching, wake and reprogramming durations plus the power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingEnergyModel {
    pub rx_to_tx_s: f64,
    pub tx_to_rx_s: f64,
    pub freq_switch_s: f64,
    pub wake_s: f64,
    pub reprogram_s: f64,
    /// Decompression time per 30 kB block at the end of a transfer.
    pub decompress_block_s: f64,
    pub power: PowerModel,
}

impl Default for TimingEnergyModel {
    fn default() -> Self {
        Self {
            rx_to_tx_s: 11e-6,
            tx_to_rx_s: 45e-6,
            freq_switch_s: 220e-6,
            wake_s: 22e-3,
            reprogram_s: 22e-3,
            decompress_block_s: 22.5e-3,
            power: PowerModel::default(),
        }
    }
}

/// What travels through a session: a real image (chunked and compressed)
/// or a raw payload of a given size standing in for an externally
/// compressed stream.
#[derive(Debug, Clone)]
pub enum TransferSource {
    Image(FirmwareImage),
    RawPayload { bytes: usize },
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub lora: LoraParams,
    pub payload_size: usize,
    pub loss_prob: f64,
    pub seed: u64,
    pub timing: TimingEnergyModel,
    pub source: TransferSource,
    /// Absolute time the REQUEST tells the node to wake at (0 = now).
    pub wake_time_s: f64,
    pub device_id: u16,
}

impl SessionConfig {
    pub fn new(lora: LoraParams, source: TransferSource) -> Self {
        Self {
            lora,
            payload_size: 60,
            loss_prob: 0.0,
            seed: 0,
            timing: TimingEnergyModel::default(),
            source,
            wake_time_s: 0.0,
            device_id: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRadioState {
    Rx,
    Tx,
    Idle,
    Sleep,
}

/// One contiguous span of a node radio state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub state: NodeRadioState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ap,
    Node,
}

/// One transmission as seen on the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t_s: f64,
    pub from: Role,
    pub kind: OtaPacketKind,
    pub seq: u32,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionOutcome {
    Completed,
    /// The retry ceiling was exhausted; the transfer did not terminate.
    Failed { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionReport {
    pub outcome: SessionOutcome,
    pub total_time_s: f64,
    pub node_energy_mj: f64,
    pub packets_sent: u64,
    pub data_packets: u64,
    pub retransmissions: u64,
    pub bytes_over_air: u64,
    pub decompress_time_budget_s: f64,
    /// Whether the delivered bytes matched the source exactly (None when
    /// the session did not complete).
    pub image_verified: Option<bool>,
    #[serde(skip)]
    pub state_log: Vec<StateInterval>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

/// A finished simulation: the report plus the node-side artifacts.
#[derive(Debug)]
pub struct SessionRun {
    pub report: SessionReport,
    pub node_flash: FlashModel,
    pub manifest: Option<ChunkManifest>,
}

#[derive(Debug)]
enum Ev {
    Arrive { to: Role, packet: OtaPacket },
    ApTimer { id: u64 },
    NodeTimer { id: u64 },
    NodeReprogramDone,
}

struct QueuedEvent {
    t: f64,
    order: u64,
    ev: Ev,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.order == other.order
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want earliest first
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.order.cmp(&self.order))
    }
}

struct StateTracker {
    log: Vec<StateInterval>,
    state: NodeRadioState,
    since: f64,
}

impl StateTracker {
    fn new() -> Self {
        Self {
            log: Vec::new(),
            state: NodeRadioState::Rx,
            since: 0.0,
        }
    }

    fn set(&mut self, t: f64, state: NodeRadioState) {
        debug_assert!(t >= self.since - 1e-12, "state log must stay monotonic");
        let t = t.max(self.since);
        if state == self.state {
            return;
        }
        if t > self.since {
            self.log.push(StateInterval {
                start_s: self.since,
                end_s: t,
                state: self.state,
            });
        }
        self.state = state;
        self.since = t;
    }

    fn finish(mut self, t: f64) -> Vec<StateInterval> {
        if t > self.since {
            self.log.push(StateInterval {
                start_s: self.since,
                end_s: t,
                state: self.state,
            });
        }
        self.log
    }
}

/// Integrate energy from a state log; also used by tests as the
/// independent check against the simulator's own accumulator.
pub fn integrate_energy_mj(log: &[StateInterval], power: &PowerModel) -> f64 {
    log.iter()
        .map(|iv| {
            let p = match iv.state {
                NodeRadioState::Rx => power.rx_w,
                NodeRadioState::Tx => power.tx_w,
                NodeRadioState::Idle => power.idle_w,
                NodeRadioState::Sleep => power.sleep_w,
            };
            p * (iv.end_s - iv.start_s)
        })
        .sum::<f64>()
        * 1e3
}

struct Sim {
    cfg: SessionConfig,
    queue: BinaryHeap<QueuedEvent>,
    order: u64,
    now: f64,
    erasure: ErasureChannel,
    ap: ApMachine,
    node: NodeMachine,
    flash: FlashModel,
    tracker: StateTracker,
    node_rx_from: f64,
    ap_rx_from: f64,
    ap_timer_id: u64,
    ap_timer_active: Option<u64>,
    node_timer_id: u64,
    node_timer_active: Option<u64>,
    packets_sent: u64,
    bytes_over_air: u64,
    trace: Vec<TraceEntry>,
    outcome: Option<SessionOutcome>,
    n_blocks: usize,
}

impl Sim {
    fn push(&mut self, t: f64, ev: Ev) {
        self.order += 1;
        self.queue.push(QueuedEvent {
            t,
            order: self.order,
            ev,
        });
    }

    fn airtime_of(&self, packet: &OtaPacket) -> f64 {
        airtime(&self.cfg.lora, packet.wire_len())
    }

    /// Put a packet on the channel. Returns the transmission end time.
    fn transmit(&mut self, from: Role, tx_start: f64, packet: OtaPacket) -> f64 {
        let duration = self.airtime_of(&packet);
        let tx_end = tx_start + duration;
        let delivered = self.erasure.delivered();
        self.packets_sent += 1;
        self.bytes_over_air += packet.wire_len() as u64;
        self.trace.push(TraceEntry {
            t_s: tx_start,
            from,
            kind: packet.kind,
            seq: packet.seq,
            delivered,
        });
        match from {
            Role::Node => {
                let t = &self.cfg.timing;
                self.tracker.set(tx_start, NodeRadioState::Tx);
                self.tracker.set(tx_end, NodeRadioState::Idle);
                self.tracker.set(tx_end + t.tx_to_rx_s, NodeRadioState::Rx);
                self.node_rx_from = tx_end + t.tx_to_rx_s;
            }
            Role::Ap => {
                self.ap_rx_from = tx_end + self.cfg.timing.tx_to_rx_s;
            }
        }
        if delivered {
            let to = match from {
                Role::Ap => Role::Node,
                Role::Node => Role::Ap,
            };
            self.push(tx_end, Ev::Arrive { to, packet });
        }
        tx_end
    }

    fn apply_ap_actions(&mut self, trigger_t: f64, gap: f64, actions: Vec<OtaAction>) {
        let mut last_tx_end = trigger_t;
        for action in actions {
            match action {
                OtaAction::Send(p) => {
                    last_tx_end = self.transmit(Role::Ap, trigger_t + gap, p);
                }
                OtaAction::StartTimer { duration_s } => {
                    self.ap_timer_id += 1;
                    self.ap_timer_active = Some(self.ap_timer_id);
                    self.push(last_tx_end + duration_s, Ev::ApTimer { id: self.ap_timer_id });
                }
                OtaAction::CancelTimer => self.ap_timer_active = None,
                OtaAction::Fail => {
                    self.outcome = Some(SessionOutcome::Failed {
                        reason: "retry ceiling exhausted".into(),
                    });
                }
                _ => {}
            }
        }
    }

    fn apply_node_actions(&mut self, trigger_t: f64, actions: Vec<OtaAction>) {
        let timing = self.cfg.timing;
        let mut wake_at: Option<f64> = None;
        let mut last_tx_end = trigger_t;
        for action in actions {
            match action {
                OtaAction::Sleep { until_s } if until_s == f64::MAX => {
                    self.tracker.set(trigger_t, NodeRadioState::Sleep);
                    self.node_rx_from = f64::MAX;
                }
                OtaAction::Sleep { until_s } => wake_at = Some(until_s),
                OtaAction::Send(p) => {
                    let tx_start = match wake_at.take() {
                        Some(until) if until > trigger_t + timing.rx_to_tx_s => {
                            // sleep, then spend the wake latency before TX
                            let wake_begin = (until - timing.wake_s).max(trigger_t);
                            self.tracker.set(trigger_t, NodeRadioState::Sleep);
                            self.tracker.set(wake_begin, NodeRadioState::Idle);
                            self.node_rx_from = wake_begin + timing.wake_s;
                            wake_begin + timing.wake_s
                        }
                        _ => {
                            self.tracker.set(trigger_t, NodeRadioState::Idle);
                            trigger_t + timing.rx_to_tx_s
                        }
                    };
                    last_tx_end = self.transmit(Role::Node, tx_start, p);
                }
                OtaAction::WriteFlash { offset, data } => {
                    self.flash
                        .write(offset, &data)
                        .expect("transfer exceeds flash capacity");
                }
                OtaAction::StartTimer { duration_s } => {
                    self.node_timer_id += 1;
                    self.node_timer_active = Some(self.node_timer_id);
                    self.push(
                        last_tx_end + duration_s,
                        Ev::NodeTimer {
                            id: self.node_timer_id,
                        },
                    );
                }
                OtaAction::CancelTimer => self.node_timer_active = None,
                OtaAction::Reprogram => {
                    let decompress = self.n_blocks as f64 * timing.decompress_block_s;
                    self.tracker.set(trigger_t, NodeRadioState::Idle);
                    self.node_rx_from = f64::MAX;
                    self.push(
                        trigger_t + decompress + timing.reprogram_s,
                        Ev::NodeReprogramDone,
                    );
                }
                OtaAction::Fail => {
                    self.outcome = Some(SessionOutcome::Failed {
                        reason: "node gave up".into(),
                    });
                }
            }
        }
    }

    fn run(mut self) -> (SessionOutcome, f64, Vec<StateInterval>, Self) {
        let start_actions = self.ap.start();
        self.apply_ap_actions(0.0, 0.0, start_actions);

        let mut guard: u64 = 0;
        while let Some(qe) = self.queue.pop() {
            guard += 1;
            assert!(guard < 20_000_000, "simulation runaway");
            self.now = qe.t;
            if self.outcome.is_some() {
                continue; // drain; the session already failed
            }
            match qe.ev {
                Ev::Arrive { to: Role::Node, packet } => {
                    if self.now < self.node_rx_from {
                        continue; // radio was not listening
                    }
                    let actions = self.node.step(MachineEvent::PacketReceived(packet));
                    self.apply_node_actions(self.now, actions);
                }
                Ev::Arrive { to: Role::Ap, packet } => {
                    if self.now < self.ap_rx_from {
                        continue;
                    }
                    let actions = self.ap.step(MachineEvent::PacketReceived(packet));
                    self.apply_ap_actions(self.now, self.cfg.timing.tx_to_rx_s, actions);
                }
                Ev::ApTimer { id } => {
                    if self.ap_timer_active != Some(id) {
                        continue;
                    }
                    self.ap_timer_active = None;
                    let actions = self.ap.step(MachineEvent::Timeout);
                    self.apply_ap_actions(self.now, self.cfg.timing.rx_to_tx_s, actions);
                }
                Ev::NodeTimer { id } => {
                    if self.node_timer_active != Some(id) {
                        continue;
                    }
                    self.node_timer_active = None;
                    let actions = self.node.step(MachineEvent::Timeout);
                    self.apply_node_actions(self.now, actions);
                }
                Ev::NodeReprogramDone => {
                    let actions = self.node.step(MachineEvent::TimerFired);
                    self.apply_node_actions(self.now, actions);
                }
            }
        }

        let outcome = self.outcome.clone().unwrap_or_else(|| {
            if self.node.phase == NodePhase::Done && self.ap.phase == ApPhase::Done {
                SessionOutcome::Completed
            } else {
                SessionOutcome::Failed {
                    reason: format!(
                        "stalled (ap {:?}, node {:?})",
                        self.ap.phase, self.node.phase
                    ),
                }
            }
        });
        let total = self.now;
        let tracker = std::mem::replace(&mut self.tracker, StateTracker::new());
        let log = tracker.finish(total);
        (outcome, total, log, self)
    }
}

/// Deterministic filler for raw-payload transfers.
fn raw_payload_packets(bytes: usize, payload_size: usize) -> Vec<Vec<u8>> {
    (0..bytes.div_ceil(payload_size))
        .map(|i| {
            let start = i * payload_size;
            let end = (start + payload_size).min(bytes);
            (start..end).map(|j| (j % 251) as u8).collect()
        })
        .collect()
}

/// Run one update session end to end and report timing, energy and
/// transfer statistics.
pub fn simulate_session(cfg: SessionConfig) -> Result<SessionRun, OtaError> {
    if cfg.payload_size == 0 || cfg.payload_size > 60 {
        return Err(OtaError::BadConfig(format!(
            "payload_size {} outside 1..=60",
            cfg.payload_size
        )));
    }
    if !(0.0..=1.0).contains(&cfg.loss_prob) {
        return Err(OtaError::BadConfig(format!(
            "loss_prob {} outside [0, 1]",
            cfg.loss_prob
        )));
    }
    cfg.lora
        .validate()
        .map_err(|e| OtaError::BadConfig(e.to_string()))?;

    let (packets, manifest, n_blocks, expected_stream) = match &cfg.source {
        TransferSource::Image(image) => {
            let chunked = chunk_firmware(image, cfg.payload_size);
            let stream: Vec<u8> = chunked.packets.concat();
            (
                chunked.packets,
                Some(chunked.manifest),
                stream.len().div_ceil(BLOCK_SIZE).max(1),
                stream,
            )
        }
        TransferSource::RawPayload { bytes } => {
            let packets = raw_payload_packets(*bytes, cfg.payload_size);
            let stream: Vec<u8> = packets.concat();
            (packets, None, bytes.div_ceil(BLOCK_SIZE).max(1), stream)
        }
    };
    let n_data = packets.len();

    // stop-and-wait timeout: twice the nominal exchange
    let data_airtime = airtime(&cfg.lora, OtaPacket::data(0, vec![0; cfg.payload_size]).wire_len());
    let ack_airtime = airtime(&cfg.lora, OtaPacket::ack(0).wire_len());
    let timeout =
        2.0 * (data_airtime + ack_airtime + cfg.timing.rx_to_tx_s + cfg.timing.tx_to_rx_s);

    let ap = ApMachine::new(packets, vec![cfg.device_id], cfg.wake_time_s, timeout);
    let node = NodeMachine::new(cfg.device_id, cfg.payload_size, 5.0 * timeout);
    let erasure = ErasureChannel::new(cfg.loss_prob, cfg.seed)
        .map_err(|e| OtaError::BadConfig(e.to_string()))?;

    let sim = Sim {
        cfg: cfg.clone(),
        queue: BinaryHeap::new(),
        order: 0,
        now: 0.0,
        erasure,
        ap,
        node,
        flash: FlashModel::default(),
        tracker: StateTracker::new(),
        node_rx_from: 0.0,
        ap_rx_from: 0.0,
        ap_timer_id: 0,
        ap_timer_active: None,
        node_timer_id: 0,
        node_timer_active: None,
        packets_sent: 0,
        bytes_over_air: 0,
        trace: Vec::new(),
        outcome: None,
        n_blocks,
    };

    let (outcome, total_time_s, state_log, sim) = sim.run();

    let image_verified = match outcome {
        SessionOutcome::Completed => {
            let delivered = sim.flash.read(0, expected_stream.len());
            Some(delivered == &expected_stream[..])
        }
        SessionOutcome::Failed { .. } => None,
    };

    let node_energy_mj = integrate_energy_mj(&state_log, &cfg.timing.power);
    let report = SessionReport {
        outcome,
        total_time_s,
        node_energy_mj,
        packets_sent: sim.packets_sent,
        data_packets: n_data as u64,
        retransmissions: sim.ap.retransmissions,
        bytes_over_air: sim.bytes_over_air,
        decompress_time_budget_s: n_blocks as f64 * cfg.timing.decompress_block_s,
        image_verified,
        state_log,
        trace: sim.trace,
    };
    Ok(SessionRun {
        report,
        node_flash: sim.flash,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ota::FirmwareKind;

    fn ota_link() -> LoraParams {
        LoraParams::new(8, 500_000.0, 1)
            .unwrap()
            .with_coding_rate(6)
            .unwrap()
            .with_preamble_len(8)
    }

    #[test]
    fn zero_loss_session_nominal_trace() {
        let image = FirmwareImage::new(FirmwareKind::McuProgram, vec![7; 150]).unwrap();
        let mut cfg = SessionConfig::new(ota_link(), TransferSource::Image(image));
        cfg.seed = 1;
        let run = simulate_session(cfg).unwrap();
        let r = &run.report;
        assert_eq!(r.outcome, SessionOutcome::Completed);
        assert_eq!(r.image_verified, Some(true));
        assert_eq!(r.retransmissions, 0);
        use OtaPacketKind::*;
        let kinds: Vec<OtaPacketKind> = r.trace.iter().map(|e| e.kind).collect();
        let n = r.data_packets as usize;
        let mut expected = vec![Request, Ready];
        for _ in 0..n {
            expected.push(Data);
            expected.push(Ack);
        }
        expected.push(End);
        assert_eq!(kinds, expected);
    }

    #[test]
    fn state_log_is_contiguous_and_energy_consistent() {
        let image = FirmwareImage::new(FirmwareKind::McuProgram, vec![1; 2000]).unwrap();
        let mut cfg = SessionConfig::new(ota_link(), TransferSource::Image(image));
        cfg.loss_prob = 0.1;
        cfg.seed = 3;
        let run = simulate_session(cfg.clone()).unwrap();
        let r = &run.report;
        assert_eq!(r.outcome, SessionOutcome::Completed);
        let log = &r.state_log;
        assert!((log[0].start_s - 0.0).abs() < 1e-12);
        for pair in log.windows(2) {
            assert!(
                (pair[0].end_s - pair[1].start_s).abs() < 1e-9,
                "gap in state log"
            );
        }
        assert!((log.last().unwrap().end_s - r.total_time_s).abs() < 1e-9);
        let independent = integrate_energy_mj(log, &cfg.timing.power);
        assert!((independent - r.node_energy_mj).abs() < 1e-9);
    }

    #[test]
    fn lossy_sessions_still_deliver_identical_bytes() {
        let image = FirmwareImage::new(FirmwareKind::FpgaBitstream, vec![0xC3; 5000]).unwrap();
        for loss in [0.05, 0.2] {
            for seed in 0..3 {
                let mut cfg =
                    SessionConfig::new(ota_link(), TransferSource::Image(image.clone()));
                cfg.loss_prob = loss;
                cfg.seed = seed;
                let run = simulate_session(cfg).unwrap();
                assert_eq!(run.report.outcome, SessionOutcome::Completed);
                assert_eq!(run.report.image_verified, Some(true));
            }
        }
    }

    #[test]
    fn flash_writes_follow_sequence_offsets() {
        let image = FirmwareImage::new(FirmwareKind::McuProgram, vec![5; 1000]).unwrap();
        let mut cfg = SessionConfig::new(ota_link(), TransferSource::Image(image));
        cfg.loss_prob = 0.15;
        cfg.seed = 9;
        let run = simulate_session(cfg.clone()).unwrap();
        for &(offset, _len) in run.node_flash.write_log() {
            assert_eq!(offset % cfg.payload_size, 0);
        }
        // no gaps at completion
        let total = run
            .manifest
            .as_ref()
            .map(|m| m.total_compressed)
            .unwrap();
        assert!(run.node_flash.covered(0..total));
    }

    #[test]
    fn full_loss_reports_failure() {
        let mut cfg = SessionConfig::new(
            ota_link(),
            TransferSource::RawPayload { bytes: 600 },
        );
        cfg.loss_prob = 1.0;
        cfg.seed = 2;
        let run = simulate_session(cfg).unwrap();
        assert!(matches!(run.report.outcome, SessionOutcome::Failed { .. }));
        assert!(run.report.retransmissions >= 100, "should hit the ceiling");
    }

    #[test]
    fn loss_increases_session_time() {
        let mut times = Vec::new();
        for loss in [0.0, 0.1] {
            let mut cfg = SessionConfig::new(
                ota_link(),
                TransferSource::RawPayload { bytes: 20_000 },
            );
            cfg.loss_prob = loss;
            cfg.seed = 5;
            let run = simulate_session(cfg).unwrap();
            assert_eq!(run.report.outcome, SessionOutcome::Completed);
            times.push(run.report.total_time_s);
        }
        assert!(times[1] > times[0]);
    }

    #[test]
    fn wake_delay_adds_sleep_interval() {
        let mut cfg = SessionConfig::new(
            ota_link(),
            TransferSource::RawPayload { bytes: 300 },
        );
        cfg.wake_time_s = 2.0;
        cfg.seed = 4;
        let run = simulate_session(cfg).unwrap();
        assert_eq!(run.report.outcome, SessionOutcome::Completed);
        assert!(run
            .report
            .state_log
            .iter()
            .any(|iv| iv.state == NodeRadioState::Sleep && iv.end_s - iv.start_s > 1.0));
    }

    #[test]
    fn scripted_single_loss_causes_one_retransmission() {
        // find a seed whose first erased transmission is a DATA packet,
        // then check the retransmission count matches exactly
        let mut cfg = SessionConfig::new(
            ota_link(),
            TransferSource::RawPayload { bytes: 240 },
        );
        cfg.loss_prob = 0.02;
        for seed in 0..200 {
            cfg.seed = seed;
            let run = simulate_session(cfg.clone()).unwrap();
            let r = &run.report;
            assert_eq!(r.outcome, SessionOutcome::Completed);
            // every lost packet except END stalls the exchange until the
            // AP retransmits; END loss is absorbed by the node's
            // inactivity fallback
            let lost_forward: u64 = r
                .trace
                .iter()
                .filter(|e| !e.delivered && e.kind != OtaPacketKind::End)
                .count() as u64;
            assert_eq!(
                r.retransmissions, lost_forward,
                "every lost forward-progress packet costs exactly one retransmission (seed {seed})"
            );
        }
    }
}
