use std::collections::BTreeMap;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::aop::AopError;
use crate::crosscut::caching::{CacheConfig, ReadingCache};
use crate::middleware::handshake::HandshakeState;
use crate::middleware::sessions::SessionTable;
use crate::middleware::transfer::{Reassembly, TransferConfig, TransferState};
use crate::middleware::{BuildMode, Call, Frame, FrameKind, Middleware, Op, Request, Response, SharedMiddleware};
use crate::scenario::{Scenario, ScenarioAction, Verb};

use super::prng::SplitMix64;
use super::trace::{EventKind, Source, TraceEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("drop probability {0} outside [0, 1)")]
    DropProbability(f64),
    #[error("link delay must be at least one tick")]
    ZeroDelay,
    #[error("no link from device {from} to device {to}")]
    UnknownLink { from: usize, to: usize },
    #[error("device names must be distinct")]
    DuplicateDevice,
    #[error(transparent)]
    Aop(#[from] AopError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub delay_ticks: u64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            delay_ticks: 1,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

impl LinkConfig {
    pub fn new(delay_ticks: u64, drop_probability: f64, seed: u64) -> Result<Self, SimError> {
        if delay_ticks < 1 {
            return Err(SimError::ZeroDelay);
        }
        if !(0.0..1.0).contains(&drop_probability) {
            return Err(SimError::DropProbability(drop_probability));
        }
        Ok(Self {
            delay_ticks,
            drop_probability,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredReading {
    pub payload: Vec<u8>,
    /// World-wide write counter value at the time of the write.
    pub version: u64,
}

/// Per-device middleware and concern state.
#[derive(Debug, Clone)]
pub struct Device {
    pub name: String,
    pub capabilities: Vec<String>,
    pub handshakes: BTreeMap<usize, HandshakeState>,
    pub sessions: SessionTable,
    pub outbound: BTreeMap<usize, TransferState>,
    pub inbound: BTreeMap<u64, Reassembly>,
    pub store: BTreeMap<String, StoredReading>,
    /// Readings received over the transfer service, keyed by sender and sensor.
    pub inbox: BTreeMap<(usize, String), Vec<u8>>,
    pub cache: ReadingCache,
    /// Guards currently held, innermost last.
    pub guards: Vec<String>,
}

impl Device {
    fn new(name: &str, capabilities: Vec<String>, cache: CacheConfig) -> Self {
        Self {
            name: name.to_string(),
            capabilities,
            handshakes: BTreeMap::new(),
            sessions: SessionTable::default(),
            outbound: BTreeMap::new(),
            inbound: BTreeMap::new(),
            store: BTreeMap::new(),
            inbox: BTreeMap::new(),
            cache: ReadingCache::new(cache),
            guards: Vec::new(),
        }
    }

    pub fn handshake(&self, peer: usize) -> HandshakeState {
        self.handshakes.get(&peer).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub transfer: TransferConfig,
    pub cache: CacheConfig,
    pub capabilities: Vec<String>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            transfer: TransferConfig::default(),
            cache: CacheConfig::default(),
            capabilities: vec!["sensor.read".into(), "sensor.write".into()],
        }
    }
}

/// Which part of a DATA frame a fault flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultTarget {
    PayloadBit(usize),
    SeqBit(u8),
}

/// Corrupts the `nth_data`-th DATA frame (1-based, counted world-wide) as
/// it enters the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameFault {
    pub nth_data: u64,
    pub target: FaultTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentFrame {
    pub tick: u64,
    pub frame_no: u64,
    pub from: usize,
    pub to: usize,
    pub frame: Frame,
    pub dropped: bool,
}

#[derive(Debug, Clone)]
struct Delivery {
    frame_no: u64,
    from: usize,
    to: usize,
    frame: Frame,
}

#[derive(Debug, Clone, Copy)]
enum Timer {
    Transfer { actor: usize, peer: usize, seq: u32, attempt: u8 },
    Handshake { actor: usize, peer: usize, attempt: u8 },
}

/// One deterministic, single-threaded simulation: two devices, one link in
/// each direction, a tick clock and a trace.
pub struct World {
    clock: u64,
    started: bool,
    pub(crate) devices: Vec<Device>,
    link: LinkConfig,
    prng: SplitMix64,
    shared_key: u64,
    pub(crate) config: WorldConfig,
    middleware: SharedMiddleware,
    queue: BTreeMap<(u64, u64), Delivery>,
    timers: BTreeMap<(u64, u64), Timer>,
    actions: Vec<ScenarioAction>,
    next_action: usize,
    enqueue_seq: u64,
    frame_no: u64,
    data_frames: u64,
    faults: Vec<FrameFault>,
    sent: Vec<SentFrame>,
    write_seq: u64,
    transfer_seq: u64,
    trace: Vec<TraceEvent>,
}

/// Builds a `detail` map from key/value pairs.
pub(crate) fn detail<const N: usize>(pairs: [(&str, Value); N]) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl World {
    pub fn new(
        device_names: &[&str],
        link: LinkConfig,
        shared_key: u64,
        middleware: SharedMiddleware,
    ) -> Result<Self, SimError> {
        Self::with_config(device_names, link, shared_key, middleware, WorldConfig::default())
    }

    pub fn with_config(
        device_names: &[&str],
        link: LinkConfig,
        shared_key: u64,
        middleware: SharedMiddleware,
        config: WorldConfig,
    ) -> Result<Self, SimError> {
        let link = LinkConfig::new(link.delay_ticks, link.drop_probability, link.seed)?;
        for (i, a) in device_names.iter().enumerate() {
            if device_names[..i].contains(a) {
                return Err(SimError::DuplicateDevice);
            }
        }
        let devices = device_names
            .iter()
            .map(|n| Device::new(n, config.capabilities.clone(), config.cache))
            .collect();
        Ok(Self {
            clock: 0,
            started: false,
            devices,
            link,
            prng: SplitMix64::new(link.seed),
            shared_key,
            config,
            middleware,
            queue: BTreeMap::new(),
            timers: BTreeMap::new(),
            actions: Vec::new(),
            next_action: 0,
            enqueue_seq: 0,
            frame_no: 0,
            data_frames: 0,
            faults: Vec::new(),
            sent: Vec::new(),
            write_seq: 0,
            transfer_seq: 0,
            trace: Vec::new(),
        })
    }

    /// Builds the reference middleware in `mode` and installs the scenario.
    pub fn from_scenario(scenario: &Scenario, mode: BuildMode) -> Result<Self, SimError> {
        let mw = std::sync::Arc::new(Middleware::build(mode)?);
        let names: Vec<&str> = scenario.devices.iter().map(|d| d.0.as_str()).collect();
        let mut world = World::new(&names, scenario.link, scenario.shared_key, mw)?;
        world.schedule(scenario.actions.clone());
        Ok(world)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn link(&self) -> LinkConfig {
        self.link
    }

    pub fn shared_key(&self) -> u64 {
        self.shared_key
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn middleware(&self) -> &SharedMiddleware {
        &self.middleware
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device(&self, idx: usize) -> &Device {
        &self.devices[idx]
    }

    pub fn device_index(&self, name: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.name == name)
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    pub fn sent_frames(&self) -> &[SentFrame] {
        &self.sent
    }

    pub fn add_fault(&mut self, fault: FrameFault) {
        self.faults.push(fault);
    }

    pub(crate) fn fresh_nonce(&mut self) -> u64 {
        self.prng.next_u64()
    }

    pub(crate) fn next_write_version(&mut self) -> u64 {
        self.write_seq += 1;
        self.write_seq
    }

    pub(crate) fn next_transfer_id(&mut self) -> u64 {
        self.transfer_seq += 1;
        self.transfer_seq
    }

    pub(crate) fn emit(
        &mut self,
        actor: usize,
        kind: EventKind,
        module: &str,
        op: &str,
        source: Source,
        detail: Map<String, Value>,
    ) {
        let actor = self
            .devices
            .get(actor)
            .map(|d| d.name.clone())
            .unwrap_or_else(|| format!("#{actor}"));
        self.trace.push(TraceEvent {
            tick: self.clock,
            actor,
            kind,
            module: module.to_string(),
            op: op.to_string(),
            source,
            detail,
        });
    }

    /// Invokes a middleware operation on behalf of `actor`.
    pub fn call(&mut self, op: Op, actor: usize, request: Request) -> Result<Response, AopError> {
        let mw = SharedMiddleware::clone(&self.middleware);
        mw.invoke(op, self, &Call { actor, request })
    }

    /// Puts a frame on the link from `from` to `to`. The frame is either
    /// dropped (one PRNG draw decides) or queued for `clock + delay`.
    pub fn send_frame(
        &mut self,
        from: usize,
        to: usize,
        mut frame: Frame,
        extra: Map<String, Value>,
    ) -> Result<(), SimError> {
        if from == to || from >= self.devices.len() || to >= self.devices.len() {
            return Err(SimError::UnknownLink { from, to });
        }
        self.frame_no += 1;
        let frame_no = self.frame_no;
        let mut corrupted = false;
        if frame.kind == FrameKind::Data {
            self.data_frames += 1;
            let n = self.data_frames;
            for fault in self.faults.iter().filter(|f| f.nth_data == n) {
                match fault.target {
                    FaultTarget::PayloadBit(bit) => frame.flip_payload_bit(bit),
                    FaultTarget::SeqBit(bit) => frame.seq ^= 1 << (bit % 32),
                }
                corrupted = true;
            }
        }
        let dropped = self.prng.next_unit() < self.link.drop_probability;
        let mut d = detail([
            ("frame_no", Value::from(frame_no)),
            ("frame", Value::from(frame.kind.as_str())),
            ("seq", Value::from(frame.seq)),
            ("to", Value::from(self.devices[to].name.clone())),
        ]);
        if corrupted {
            d.insert("corrupted".into(), Value::from(true));
        }
        d.extend(extra);
        self.sent.push(SentFrame {
            tick: self.clock,
            frame_no,
            from,
            to,
            frame: frame.clone(),
            dropped,
        });
        if dropped {
            self.emit(from, EventKind::FrameDropped, "Transport", "send_frame", Source::Core, d);
        } else {
            self.emit(from, EventKind::FrameSent, "Transport", "send_frame", Source::Core, d);
            self.enqueue(frame_no, from, to, frame);
        }
        Ok(())
    }

    /// Queues a frame for delivery without a drop draw, as if replayed by a
    /// third party. Used to script replay and tampering scenarios.
    pub fn inject_frame(&mut self, from: usize, to: usize, frame: Frame) {
        self.frame_no += 1;
        let frame_no = self.frame_no;
        self.enqueue(frame_no, from, to, frame);
    }

    fn enqueue(&mut self, frame_no: u64, from: usize, to: usize, frame: Frame) {
        self.enqueue_seq += 1;
        let due = self.clock + self.link.delay_ticks;
        self.queue.insert(
            (due, self.enqueue_seq),
            Delivery {
                frame_no,
                from,
                to,
                frame,
            },
        );
    }

    fn schedule_timer(&mut self, timer: Timer) {
        self.enqueue_seq += 1;
        let due = self.clock + self.config.transfer.timeout_ticks;
        self.timers.insert((due, self.enqueue_seq), timer);
    }

    pub(crate) fn schedule_timeout(&mut self, actor: usize, peer: usize, seq: u32, attempt: u8) {
        self.schedule_timer(Timer::Transfer {
            actor,
            peer,
            seq,
            attempt,
        });
    }

    pub(crate) fn schedule_handshake_timeout(&mut self, actor: usize, peer: usize, attempt: u8) {
        self.schedule_timer(Timer::Handshake { actor, peer, attempt });
    }

    /// Installs scenario actions, ordered by tick and then by input order.
    pub fn schedule(&mut self, mut actions: Vec<ScenarioAction>) {
        actions.sort_by_key(|a| a.at_tick);
        self.actions = actions;
        self.next_action = 0;
    }

    /// Number of frames waiting for delivery.
    pub fn pending_frames(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.timers.is_empty() && self.next_action >= self.actions.len()
    }

    /// Advances tick by tick up to and including `tick_limit`. Each tick
    /// delivers due frames, then fires due retransmission timers, then runs
    /// the scenario actions for that tick. Returns early once nothing is
    /// pending.
    pub fn run_until(&mut self, tick_limit: u64) -> Result<(), AopError> {
        let mut t = if self.started { self.clock + 1 } else { self.clock };
        while t <= tick_limit {
            self.clock = t;
            self.started = true;
            self.process_tick()?;
            if self.is_idle() {
                break;
            }
            t += 1;
        }
        Ok(())
    }

    fn process_tick(&mut self) -> Result<(), AopError> {
        let now = self.clock;
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let d = entry.remove();
            self.deliver(d)?;
        }
        while let Some(entry) = self.timers.first_entry() {
            if entry.key().0 > now {
                break;
            }
            // Timers whose frame was answered in the meantime expire silently.
            match entry.remove() {
                Timer::Transfer {
                    actor,
                    peer,
                    seq,
                    attempt,
                } => {
                    let live = self.devices[actor]
                        .outbound
                        .get(&peer)
                        .is_some_and(|s| s.is_awaiting(seq, attempt));
                    if live {
                        self.call(Op::OnTimeout, actor, Request::OnTimeout { peer, seq, attempt })?;
                    }
                }
                Timer::Handshake { actor, peer, attempt } => {
                    let hs = self.devices[actor].handshake(peer);
                    if hs.last_sent.is_some() && hs.retries == attempt {
                        self.call(
                            Op::HandshakeTimeout,
                            actor,
                            Request::HandshakeTimeout { peer, attempt },
                        )?;
                    }
                }
            }
        }
        while let Some(action) = self.actions.get(self.next_action) {
            if action.at_tick > now {
                break;
            }
            let action = action.clone();
            self.next_action += 1;
            if action.at_tick == now {
                self.fire(&action)?;
            }
        }
        Ok(())
    }

    fn deliver(&mut self, d: Delivery) -> Result<(), AopError> {
        let from_name = self.devices[d.from].name.clone();
        self.emit(
            d.to,
            EventKind::Delivered,
            "Transport",
            "deliver",
            Source::Core,
            detail([
                ("frame_no", Value::from(d.frame_no)),
                ("frame", Value::from(d.frame.kind.as_str())),
                ("seq", Value::from(d.frame.seq)),
                ("from", Value::from(from_name)),
            ]),
        );
        if d.frame.kind.is_handshake() {
            self.call(
                Op::HandleHandshake,
                d.to,
                Request::HandleHandshake {
                    from: d.from,
                    frame: d.frame,
                },
            )?;
        } else {
            self.call(
                Op::HandleFrame,
                d.to,
                Request::HandleFrame {
                    from: d.from,
                    frame: d.frame,
                },
            )?;
        }
        Ok(())
    }

    fn fire(&mut self, action: &ScenarioAction) -> Result<(), AopError> {
        let actor = action.actor;
        match &action.verb {
            Verb::Handshake { peer } => self.call(Op::Initiate, actor, Request::Initiate { peer: *peer })?,
            Verb::Send { peer, sensor, payload } => self.call(
                Op::SendReading,
                actor,
                Request::SendReading {
                    peer: *peer,
                    sensor: sensor.clone(),
                    payload: payload.clone(),
                },
            )?,
            Verb::Read { peer, sensor } => self.call(
                Op::GetReading,
                actor,
                Request::GetReading {
                    peer: *peer,
                    sensor: sensor.clone(),
                },
            )?,
            Verb::Put { sensor, payload } => self.call(
                Op::PutReading,
                actor,
                Request::PutReading {
                    sensor: sensor.clone(),
                    payload: payload.clone(),
                },
            )?,
        };
        Ok(())
    }
}
