//! Deterministic discrete-event engine: radio delivery over a static
//! topology, per-node timers, acknowledged traffic flows, energy
//! accounting and packet counters.
//!
//! Determinism rules: events are ordered by (time, schedule sequence);
//! every collection iterated during a run is ordered; all randomness
//! (per-packet jitter, fabricated digests) comes from one ChaCha stream
//! owned by the engine. Identical (scenario, seed) pairs produce
//! byte-identical traces and reports.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{AdversaryBehavior, ForwardOutcome};
use crate::digest::SecretKey;
use crate::metrics::{energy_audit, AuditError, DropReason, EnergyMeter, Metrics};
use crate::node::{
    format_time, Action, DataKind, DataPacket, Micros, Node, NodeConfig, ProtocolMode, RouteState,
    MILLIS, SECONDS,
};
use crate::scenario::{Scenario, ScenarioError, TrafficFlow};
use crate::wire::{self, NodeAddress, SecureEnvelope, SecurityExtension, WireError, HASH_ID_MD5};

/// Node upkeep granularity.
const TICK: Micros = 100 * MILLIS;
/// Adversary injection cadence.
const INJECT_INTERVAL: Micros = 1 * SECONDS;
/// Stop-and-wait retransmission timeout.
const RETRANS_TIMEOUT: Micros = 2 * SECONDS;
/// Acknowledgement packet size in octets.
const ACK_SIZE: u32 = 40;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error("internal wire error: {0}")]
    Wire(#[from] WireError),
    #[error("energy audit failed at node {node}: {source}")]
    Audit {
        node: NodeAddress,
        source: AuditError,
    },
    #[error("routing loop toward {dest} starting at {start}")]
    RoutingLoop {
        dest: NodeAddress,
        start: NodeAddress,
    },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Walk every routing table after every event and fail on a cycle.
    pub check_loop_freedom: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Recv,
    Send,
    Fwd,
    Drop,
    Detect,
    Deliver,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TraceEvent::Recv => "recv",
            TraceEvent::Send => "send",
            TraceEvent::Fwd => "fwd",
            TraceEvent::Drop => "drop",
            TraceEvent::Detect => "detect",
            TraceEvent::Deliver => "deliver",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub t: Micros,
    pub node: NodeAddress,
    pub ev: TraceEvent,
    pub msg: String,
    pub reason: Option<String>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} node={} ev={} msg={}",
            format_time(self.t),
            self.node,
            self.ev,
            self.msg
        )?;
        if let Some(r) = &self.reason {
            write!(f, " reason={}", r)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionRecord {
    pub t: Micros,
    pub detector: NodeAddress,
    pub offender: NodeAddress,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteSnapshot {
    pub dest: NodeAddress,
    pub next_hop: NodeAddress,
    pub hop_count: u32,
    pub dest_seq: u32,
    pub state: RouteState,
}

#[derive(Debug, Clone)]
pub struct NodeReport {
    pub metrics: Metrics,
    pub energy: EnergyMeter,
    pub routes: Vec<RouteSnapshot>,
    pub blacklist: Vec<NodeAddress>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FlowStats {
    pub data_generated: u64,
    pub data_delivered: u64,
    pub acks_generated: u64,
    pub acks_delivered: u64,
    pub first_delivery: Option<Micros>,
    pub last_delivery: Option<Micros>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub duration: Micros,
    pub nodes: BTreeMap<NodeAddress, NodeReport>,
    pub detections: Vec<DetectionRecord>,
    pub flows: Vec<FlowStats>,
    pub trace: Vec<TraceRecord>,
    /// Radio receptions across all nodes; equals the sum of `received`.
    pub total_deliveries: u64,
}

impl RunOutput {
    pub fn render_trace(&self) -> String {
        let mut s = String::new();
        for rec in &self.trace {
            s.push_str(&rec.to_string());
            s.push('\n');
        }
        s
    }

    pub fn node(&self, addr: NodeAddress) -> &NodeReport {
        &self.nodes[&addr]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum LinkPacket {
    Control { bytes: Vec<u8>, adversarial: bool },
    Data(DataPacket),
}

#[derive(Debug, Clone)]
enum EventKind {
    NodeTick(NodeAddress),
    FlowTimer(u32),
    Delivery {
        from: NodeAddress,
        to: NodeAddress,
        packet: LinkPacket,
    },
}

#[derive(Debug, Clone)]
struct Event {
    t: Micros,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t, self.seq).cmp(&(other.t, other.seq))
    }
}

struct FlowRuntime {
    cfg: TrafficFlow,
    next_seq: u32,
    /// Outstanding (seq, sent_at) for reliable flows.
    awaiting: Option<(u32, Micros)>,
    last_fresh_at: Micros,
    next_fresh_at: Micros,
    stats: FlowStats,
}

struct SimNode {
    node: Node,
    behavior: AdversaryBehavior,
    energy: EnergyMeter,
    metrics: Metrics,
    next_inject_at: Micros,
    inject_round: u64,
}

struct Engine {
    duration: Micros,
    latency: Micros,
    jitter: Micros,
    secured: bool,
    adjacency: BTreeMap<NodeAddress, Vec<NodeAddress>>,
    nodes: BTreeMap<NodeAddress, SimNode>,
    flows: Vec<FlowRuntime>,
    heap: BinaryHeap<Reverse<Event>>,
    event_seq: u64,
    now: Micros,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    detections: Vec<DetectionRecord>,
    total_deliveries: u64,
    check_loops: bool,
}

/// Link set induced by positions and radio range, or by explicit
/// overrides when the scenario lists any. Symmetric, self-free, sorted.
pub fn build_adjacency(scn: &Scenario) -> BTreeMap<NodeAddress, Vec<NodeAddress>> {
    let mut adj: BTreeMap<NodeAddress, Vec<NodeAddress>> =
        scn.nodes.iter().map(|n| (n.addr, Vec::new())).collect();
    if scn.links.is_empty() {
        let range2 = scn.radio_range_m * scn.radio_range_m;
        for a in &scn.nodes {
            for b in &scn.nodes {
                if a.addr == b.addr {
                    continue;
                }
                let dx = a.x - b.x;
                let dy = a.y - b.y;
                if dx * dx + dy * dy <= range2 {
                    adj.get_mut(&a.addr).unwrap().push(b.addr);
                }
            }
        }
    } else {
        for &(a, b) in &scn.links {
            adj.get_mut(&a).unwrap().push(b);
            adj.get_mut(&b).unwrap().push(a);
        }
    }
    for neighbors in adj.values_mut() {
        neighbors.sort();
        neighbors.dedup();
    }
    adj
}

pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput, SimError> {
    run_with_options(scenario, seed, RunOptions::default())
}

pub fn run_with_options(
    scenario: &Scenario,
    seed: u64,
    options: RunOptions,
) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let mut engine = Engine::new(scenario, seed, options);
    engine.run()?;
    engine.finish(seed)
}

impl Engine {
    fn new(scn: &Scenario, seed: u64, options: RunOptions) -> Engine {
        let secured = scn.protocol == ProtocolMode::Secured;
        let group_key = scn
            .key
            .as_ref()
            .map(|bytes| SecretKey::new(bytes.clone()).expect("validated"));

        let mut nodes = BTreeMap::new();
        for def in &scn.nodes {
            let behavior = scn
                .malicious
                .iter()
                .find(|(addr, _)| *addr == def.addr)
                .map(|(_, b)| *b)
                .unwrap_or(AdversaryBehavior::Honest);
            // Adversaries were never provisioned with the group key.
            let key = if secured && behavior.is_honest() {
                group_key.clone()
            } else {
                None
            };
            let cfg = NodeConfig {
                mode: scn.protocol,
                key,
                hash_policy: scn.hash_policy,
                blacklist_threshold: scn.blacklist_threshold,
                hello_interval: scn.hello_interval,
                route_lifetime: scn.route_lifetime,
                rreq_cache_lifetime: scn.rreq_cache_lifetime,
                allowed_hello_loss: scn.allowed_hello_loss,
                ..NodeConfig::default()
            };
            nodes.insert(
                def.addr,
                SimNode {
                    node: Node::new(def.addr, cfg, seed),
                    behavior,
                    energy: EnergyMeter::new(
                        scn.energy.initial_uj,
                        scn.energy.tx_cost_uj,
                        scn.energy.rx_cost_uj,
                    ),
                    metrics: Metrics::default(),
                    next_inject_at: INJECT_INTERVAL,
                    inject_round: 0,
                },
            );
        }

        let flows = scn
            .flows
            .iter()
            .map(|cfg| FlowRuntime {
                cfg: cfg.clone(),
                next_seq: 1,
                awaiting: None,
                last_fresh_at: 0,
                next_fresh_at: cfg.start,
                stats: FlowStats::default(),
            })
            .collect::<Vec<_>>();

        let mut engine = Engine {
            duration: scn.duration,
            latency: scn.latency,
            jitter: scn.jitter,
            secured,
            adjacency: build_adjacency(scn),
            nodes,
            flows,
            heap: BinaryHeap::new(),
            event_seq: 0,
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: Vec::new(),
            detections: Vec::new(),
            total_deliveries: 0,
            check_loops: options.check_loop_freedom,
        };

        let addrs: Vec<NodeAddress> = engine.nodes.keys().copied().collect();
        for addr in addrs {
            engine.schedule(TICK, EventKind::NodeTick(addr));
        }
        for (i, flow) in engine.flows.iter().enumerate() {
            let start = flow.cfg.start;
            let ev = EventKind::FlowTimer(i as u32);
            // scheduling directly to keep the borrow checker happy
            if start < engine.duration {
                engine.heap.push(Reverse(Event {
                    t: start,
                    seq: engine.event_seq,
                    kind: ev,
                }));
                engine.event_seq += 1;
            }
        }
        engine
    }

    fn schedule(&mut self, t: Micros, kind: EventKind) {
        if t >= self.duration {
            return;
        }
        self.heap.push(Reverse(Event {
            t,
            seq: self.event_seq,
            kind,
        }));
        self.event_seq += 1;
    }

    fn trace(&mut self, node: NodeAddress, ev: TraceEvent, msg: String, reason: Option<String>) {
        self.trace.push(TraceRecord {
            t: self.now,
            node,
            ev,
            msg,
            reason,
        });
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.t >= self.duration {
                break;
            }
            self.now = ev.t;
            match ev.kind {
                EventKind::NodeTick(addr) => self.on_tick(addr)?,
                EventKind::FlowTimer(id) => self.on_flow_timer(id)?,
                EventKind::Delivery { from, to, packet } => self.on_delivery(from, to, packet)?,
            }
            if self.check_loops {
                self.assert_loop_free()?;
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, addr: NodeAddress) -> Result<(), SimError> {
        if self.nodes[&addr].energy.is_depleted() {
            return Ok(()); // battery dead: node is inert, timer stops
        }

        let behavior = self.nodes[&addr].behavior;
        if behavior.injects() && self.now >= self.nodes[&addr].next_inject_at {
            let round = {
                let n = self.nodes.get_mut(&addr).unwrap();
                n.next_inject_at += INJECT_INTERVAL;
                let r = n.inject_round;
                n.inject_round += 1;
                r
            };
            for env in behavior.inject(round) {
                self.transmit_control(addr, env, None, false, true)?;
            }
        }

        let actions = {
            let now = self.now;
            self.nodes.get_mut(&addr).unwrap().node.timer_tick(now)
        };
        self.process_actions(addr, actions)?;
        self.schedule(self.now + TICK, EventKind::NodeTick(addr));
        Ok(())
    }

    fn on_flow_timer(&mut self, id: u32) -> Result<(), SimError> {
        let idx = id as usize;
        let (src, stop, interval, reliable, size) = {
            let f = &self.flows[idx];
            (
                f.cfg.src,
                f.cfg.stop,
                f.cfg.interval,
                f.cfg.reliable,
                f.cfg.packet_size,
            )
        };
        if self.now >= stop {
            return Ok(());
        }
        let src_alive = !self.nodes[&src].energy.is_depleted();

        let awaiting = self.flows[idx].awaiting;
        match awaiting {
            None => {
                if self.now < self.flows[idx].next_fresh_at {
                    return Ok(()); // stale timer; the proper one is queued
                }
                if !src_alive {
                    self.schedule(self.now + interval, EventKind::FlowTimer(id));
                    return Ok(());
                }
                let pkt = {
                    let f = &mut self.flows[idx];
                    let pkt = DataPacket {
                        flow: id,
                        seq: f.next_seq,
                        kind: DataKind::Payload,
                        src: f.cfg.src,
                        dst: f.cfg.dst,
                        size,
                    };
                    f.next_seq += 1;
                    f.last_fresh_at = self.now;
                    f.next_fresh_at = self.now + interval;
                    f.stats.data_generated += 1;
                    if reliable {
                        f.awaiting = Some((pkt.seq, self.now));
                    }
                    pkt
                };
                self.nodes.get_mut(&src).unwrap().metrics.generated += 1;
                let actions = {
                    let now = self.now;
                    self.nodes
                        .get_mut(&src)
                        .unwrap()
                        .node
                        .originate_data(pkt, now)
                };
                self.process_actions(src, actions)?;
                let next = if reliable {
                    self.now + RETRANS_TIMEOUT
                } else {
                    self.now + interval
                };
                self.schedule(next, EventKind::FlowTimer(id));
            }
            Some((seq, sent_at)) => {
                if self.now < sent_at + RETRANS_TIMEOUT {
                    return Ok(()); // stale retransmit check
                }
                if src_alive {
                    let pkt = DataPacket {
                        flow: id,
                        seq,
                        kind: DataKind::Payload,
                        src,
                        dst: self.flows[idx].cfg.dst,
                        size,
                    };
                    self.flows[idx].awaiting = Some((seq, self.now));
                    // A retransmission is a new packet instance originated
                    // by the source (flow stats still count it once).
                    self.nodes.get_mut(&src).unwrap().metrics.generated += 1;
                    let actions = {
                        let now = self.now;
                        self.nodes
                            .get_mut(&src)
                            .unwrap()
                            .node
                            .originate_data(pkt, now)
                    };
                    self.process_actions(src, actions)?;
                }
                self.schedule(self.now + RETRANS_TIMEOUT, EventKind::FlowTimer(id));
            }
        }
        Ok(())
    }

    fn on_delivery(
        &mut self,
        from: NodeAddress,
        to: NodeAddress,
        packet: LinkPacket,
    ) -> Result<(), SimError> {
        {
            let n = self.nodes.get_mut(&to).unwrap();
            if !n.energy.can_rx() {
                return Ok(()); // dead or starved receivers hear nothing
            }
            n.energy.pay_rx();
            n.metrics.received += 1;
        }
        self.total_deliveries += 1;

        match packet {
            LinkPacket::Control { bytes, adversarial } => {
                let outcome = {
                    let now = self.now;
                    self.nodes
                        .get_mut(&to)
                        .unwrap()
                        .node
                        .receive_pipeline(&bytes, from, now)
                };
                if adversarial && outcome.accepted {
                    self.nodes.get_mut(&to).unwrap().metrics.accepted_tampered += 1;
                }
                self.process_actions(to, outcome.actions)?;
            }
            LinkPacket::Data(pkt) => {
                let actions = {
                    let now = self.now;
                    self.nodes
                        .get_mut(&to)
                        .unwrap()
                        .node
                        .receive_data(pkt, from, now)
                };
                self.process_actions(to, actions)?;
            }
        }
        Ok(())
    }

    fn process_actions(&mut self, addr: NodeAddress, actions: Vec<Action>) -> Result<(), SimError> {
        for action in actions {
            match action {
                Action::Recv { msg } => self.trace(addr, TraceEvent::Recv, msg, None),
                Action::Drop { reason, msg } => {
                    self.nodes.get_mut(&addr).unwrap().metrics.count_drop(reason);
                    self.trace(addr, TraceEvent::Drop, msg, Some(reason.to_string()));
                }
                Action::Detect { offender, reason } => {
                    self.detections.push(DetectionRecord {
                        t: self.now,
                        detector: addr,
                        offender,
                        reason: reason.to_string(),
                    });
                    self.trace(
                        addr,
                        TraceEvent::Detect,
                        format!("offender={}", offender),
                        Some(reason.to_string()),
                    );
                }
                Action::DeliverUp { pkt } => self.deliver_up(addr, pkt)?,
                Action::Broadcast { env, forwarded } => {
                    self.transmit_control(addr, env, None, forwarded, false)?;
                }
                Action::Unicast {
                    next_hop,
                    env,
                    forwarded,
                } => {
                    self.transmit_control(addr, env, Some(next_hop), forwarded, false)?;
                }
                Action::DataOut {
                    next_hop,
                    pkt,
                    forwarded,
                } => self.transmit_data(addr, pkt, next_hop, forwarded)?,
            }
        }
        Ok(())
    }

    fn fabricate_extension(&mut self) -> SecurityExtension {
        let id = if self.rng.gen::<bool>() {
            HASH_ID_MD5
        } else {
            wire::HASH_ID_SHA1
        };
        let len = if id == HASH_ID_MD5 { 16 } else { 20 };
        let mut digest = vec![0u8; len];
        self.rng.fill_bytes(&mut digest);
        SecurityExtension {
            hash_function_id: id,
            digest,
        }
    }

    fn transmit_control(
        &mut self,
        from: NodeAddress,
        env: SecureEnvelope,
        unicast_to: Option<NodeAddress>,
        forwarded: bool,
        already_adversarial: bool,
    ) -> Result<(), SimError> {
        let behavior = self.nodes[&from].behavior;
        let mut env = env;
        let mut adversarial = already_adversarial;
        let mut forwarded = forwarded;
        let mut unicast_to = unicast_to;

        if forwarded && !behavior.is_honest() {
            let original = env.to_string();
            match behavior.apply_on_forward(env) {
                ForwardOutcome::Pass(e) => env = e,
                ForwardOutcome::Tampered(e) => {
                    env = e;
                    adversarial = true;
                }
                ForwardOutcome::Replaced(e) => {
                    // A fabricated message of the adversary's own making.
                    env = e;
                    adversarial = true;
                    forwarded = false;
                    unicast_to = None;
                }
                ForwardOutcome::Swallowed => {
                    self.nodes
                        .get_mut(&from)
                        .unwrap()
                        .metrics
                        .count_drop(DropReason::Malicious);
                    self.trace(
                        from,
                        TraceEvent::Drop,
                        original,
                        Some(DropReason::Malicious.to_string()),
                    );
                    return Ok(());
                }
            }
        }

        // Keyless nodes cannot sign; in secured runs their bare messages
        // go out with a blind-forgery extension of the right shape.
        if self.secured && !behavior.is_honest() && env.ext.is_none() {
            env.ext = Some(self.fabricate_extension());
            adversarial = true;
        }

        if !forwarded {
            self.nodes.get_mut(&from).unwrap().metrics.generated += 1;
        }

        if !self.nodes[&from].energy.can_tx() {
            let n = self.nodes.get_mut(&from).unwrap();
            n.metrics.count_drop(DropReason::NoEnergy);
            let msg = env.to_string();
            self.trace(
                from,
                TraceEvent::Drop,
                msg,
                Some(DropReason::NoEnergy.to_string()),
            );
            return Ok(());
        }

        let bytes = wire::encode(&env)?;
        {
            let n = self.nodes.get_mut(&from).unwrap();
            n.energy.pay_tx();
            if forwarded {
                n.metrics.forwarded += 1;
            } else {
                n.metrics.sent += 1;
            }
        }
        let ev = if forwarded {
            TraceEvent::Fwd
        } else {
            TraceEvent::Send
        };
        self.trace(from, ev, env.to_string(), None);

        let packet = LinkPacket::Control {
            bytes,
            adversarial,
        };
        self.radiate(from, unicast_to, packet, env.to_string());
        Ok(())
    }

    fn transmit_data(
        &mut self,
        from: NodeAddress,
        pkt: DataPacket,
        next_hop: NodeAddress,
        forwarded: bool,
    ) -> Result<(), SimError> {
        let behavior = self.nodes[&from].behavior;
        if forwarded && behavior.drops_data_forward() {
            let n = self.nodes.get_mut(&from).unwrap();
            n.metrics.count_drop(DropReason::Malicious);
            self.trace(
                from,
                TraceEvent::Drop,
                pkt.to_string(),
                Some(DropReason::Malicious.to_string()),
            );
            return Ok(());
        }

        if !self.nodes[&from].energy.can_tx() {
            let n = self.nodes.get_mut(&from).unwrap();
            n.metrics.count_drop(DropReason::NoEnergy);
            self.trace(
                from,
                TraceEvent::Drop,
                pkt.to_string(),
                Some(DropReason::NoEnergy.to_string()),
            );
            return Ok(());
        }
        {
            let n = self.nodes.get_mut(&from).unwrap();
            n.energy.pay_tx();
            if forwarded {
                n.metrics.forwarded += 1;
            } else {
                n.metrics.sent += 1;
            }
        }
        let ev = if forwarded {
            TraceEvent::Fwd
        } else {
            TraceEvent::Send
        };
        self.trace(from, ev, pkt.to_string(), None);
        self.radiate(from, Some(next_hop), LinkPacket::Data(pkt), pkt.to_string());
        Ok(())
    }

    /// Schedules deliveries for one transmission: a broadcast reaches every
    /// in-range node, a unicast only its addressee (and silently vanishes
    /// when the addressee is out of range).
    fn radiate(
        &mut self,
        from: NodeAddress,
        unicast_to: Option<NodeAddress>,
        packet: LinkPacket,
        rendered: String,
    ) {
        match unicast_to {
            Some(to) => {
                if self.adjacency[&from].contains(&to) {
                    let jitter = self.rng.gen_range(0..=self.jitter);
                    let t = self.now + self.latency + jitter;
                    self.schedule(t, EventKind::Delivery { from, to, packet });
                } else {
                    let n = self.nodes.get_mut(&from).unwrap();
                    n.metrics.count_drop(DropReason::OutOfRange);
                    self.trace(
                        from,
                        TraceEvent::Drop,
                        rendered,
                        Some(DropReason::OutOfRange.to_string()),
                    );
                }
            }
            None => {
                let targets = self.adjacency[&from].clone();
                for to in targets {
                    let jitter = self.rng.gen_range(0..=self.jitter);
                    let t = self.now + self.latency + jitter;
                    self.schedule(
                        t,
                        EventKind::Delivery {
                            from,
                            to,
                            packet: packet.clone(),
                        },
                    );
                }
            }
        }
    }

    fn deliver_up(&mut self, addr: NodeAddress, pkt: DataPacket) -> Result<(), SimError> {
        self.nodes.get_mut(&addr).unwrap().metrics.delivered += 1;
        self.trace(addr, TraceEvent::Deliver, pkt.to_string(), None);

        let idx = pkt.flow as usize;
        if idx >= self.flows.len() {
            return Ok(());
        }
        let (dst, src, reliable) = {
            let f = &self.flows[idx];
            (f.cfg.dst, f.cfg.src, f.cfg.reliable)
        };
        match pkt.kind {
            DataKind::Payload if addr == dst => {
                {
                    let s = &mut self.flows[idx].stats;
                    s.data_delivered += 1;
                    s.first_delivery.get_or_insert(self.now);
                    s.last_delivery = Some(self.now);
                }
                if reliable {
                    let ack = DataPacket {
                        flow: pkt.flow,
                        seq: pkt.seq,
                        kind: DataKind::Ack,
                        src: dst,
                        dst: src,
                        size: ACK_SIZE,
                    };
                    self.flows[idx].stats.acks_generated += 1;
                    self.nodes.get_mut(&dst).unwrap().metrics.generated += 1;
                    let actions = {
                        let now = self.now;
                        self.nodes
                            .get_mut(&dst)
                            .unwrap()
                            .node
                            .originate_data(ack, now)
                    };
                    self.process_actions(dst, actions)?;
                }
            }
            DataKind::Ack if addr == src => {
                self.flows[idx].stats.acks_delivered += 1;
                let f = &mut self.flows[idx];
                if let Some((seq, _)) = f.awaiting {
                    if seq == pkt.seq {
                        f.awaiting = None;
                        f.next_fresh_at = (f.last_fresh_at + f.cfg.interval).max(self.now);
                        let next = f.next_fresh_at;
                        if next < f.cfg.stop {
                            self.schedule(next, EventKind::FlowTimer(pkt.flow));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Follows next-hop pointers for every (node, destination) pair and
    /// fails if any walk revisits a node.
    fn assert_loop_free(&self) -> Result<(), SimError> {
        let now = self.now;
        let dests: Vec<NodeAddress> = self.nodes.keys().copied().collect();
        for start in self.nodes.keys().copied() {
            for &dest in &dests {
                if dest == start {
                    continue;
                }
                let mut visited = vec![start];
                let mut cur = start;
                loop {
                    let Some(entry) = self.nodes[&cur].node.valid_route(dest, now) else {
                        break; // dead end is fine; a cycle is not
                    };
                    let next = entry.next_hop;
                    if next == dest {
                        break;
                    }
                    if visited.contains(&next) {
                        return Err(SimError::RoutingLoop { dest, start });
                    }
                    visited.push(next);
                    cur = next;
                }
            }
        }
        Ok(())
    }

    fn finish(self, seed: u64) -> Result<RunOutput, SimError> {
        let mut nodes = BTreeMap::new();
        for (addr, sim_node) in self.nodes {
            energy_audit(&sim_node.metrics, &sim_node.energy)
                .map_err(|source| SimError::Audit { node: addr, source })?;
            let routes = sim_node
                .node
                .routes()
                .iter()
                .map(|(dest, e)| RouteSnapshot {
                    dest: *dest,
                    next_hop: e.next_hop,
                    hop_count: e.hop_count,
                    dest_seq: e.dest_seq.0,
                    state: e.state,
                })
                .collect();
            nodes.insert(
                addr,
                NodeReport {
                    metrics: sim_node.metrics,
                    energy: sim_node.energy,
                    routes,
                    blacklist: sim_node.node.blacklist().iter().copied().collect(),
                },
            );
        }
        Ok(RunOutput {
            seed,
            duration: self.duration,
            nodes,
            detections: self.detections,
            flows: self.flows.into_iter().map(|f| f.stats).collect(),
            trace: self.trace,
            total_deliveries: self.total_deliveries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::test_support::{chain_scenario, triangle_scenario};

    #[test]
    fn identical_seeds_produce_identical_runs() {
        let scn = chain_scenario(ProtocolMode::Plain, 20);
        let a = run(&scn, 5).unwrap();
        let b = run(&scn, 5).unwrap();
        assert_eq!(a.render_trace(), b.render_trace());
        for (addr, rep) in &a.nodes {
            assert_eq!(rep.metrics, b.nodes[addr].metrics);
            assert_eq!(rep.energy, b.nodes[addr].energy);
        }
        // A different seed shifts jitter, so traces differ.
        let c = run(&scn, 6).unwrap();
        assert_ne!(a.render_trace(), c.render_trace());
    }

    #[test]
    fn zero_duration_run_does_nothing() {
        let mut scn = chain_scenario(ProtocolMode::Plain, 20);
        scn.duration = 0;
        scn.flows.clear();
        let out = run(&scn, 1).unwrap();
        for rep in out.nodes.values() {
            assert_eq!(rep.metrics.packet_tuple(), (0, 0, 0, 0));
            assert_eq!(rep.energy.consumed_uj, 0);
        }
        assert!(out.trace.is_empty());
    }

    #[test]
    fn chain_broadcast_reaches_middle_only_and_triangle_reaches_both() {
        let chain = chain_scenario(ProtocolMode::Plain, 10);
        let adj = build_adjacency(&chain);
        assert_eq!(adj[&NodeAddress(1)], vec![NodeAddress(3)]);
        assert_eq!(adj[&NodeAddress(2)], vec![NodeAddress(3)]);
        assert_eq!(adj[&NodeAddress(3)], vec![NodeAddress(1), NodeAddress(2)]);

        let tri = triangle_scenario(ProtocolMode::Plain, 10);
        let adj = build_adjacency(&tri);
        assert_eq!(adj[&NodeAddress(1)], vec![NodeAddress(2), NodeAddress(3)]);
    }

    #[test]
    fn relay_forwards_and_endpoints_do_not() {
        let out = run(&chain_scenario(ProtocolMode::Plain, 30), 3).unwrap();
        assert!(out.node(NodeAddress(3)).metrics.forwarded > 0);
        assert_eq!(out.node(NodeAddress(1)).metrics.forwarded, 0);
        assert_eq!(out.node(NodeAddress(2)).metrics.forwarded, 0);
        // End-to-end delivery happened.
        assert!(out.flows[0].data_delivered > 0);
    }

    #[test]
    fn received_total_equals_delivery_events() {
        let out = run(&chain_scenario(ProtocolMode::Plain, 30), 3).unwrap();
        let received: u64 = out.nodes.values().map(|r| r.metrics.received).sum();
        assert_eq!(received, out.total_deliveries);
        for rep in out.nodes.values() {
            let m = &rep.metrics;
            assert!(m.sent <= m.generated + m.forwarded);
        }
    }

    #[test]
    fn reliable_flow_delivers_every_generated_packet_in_honest_run() {
        let mut scn = chain_scenario(ProtocolMode::Plain, 40);
        // Stop early enough that the last packet's round trip fits.
        scn.flows[0].stop = 30 * SECONDS;
        let out = run(&scn, 11).unwrap();
        let f = &out.flows[0];
        assert!(f.data_generated > 10);
        assert_eq!(f.data_delivered, f.data_generated);
        assert_eq!(f.acks_delivered, f.acks_generated);
    }

    #[test]
    fn depleted_node_stops_participating() {
        let mut scn = chain_scenario(ProtocolMode::Plain, 30);
        // Relay can afford only a handful of packets.
        scn.energy.initial_uj = 1_000_000;
        let out = run(&scn, 3).unwrap();
        let relay = out.node(NodeAddress(3));
        assert!(relay.energy.remaining_uj() < scn.energy.tx_cost_uj.min(scn.energy.rx_cost_uj));
        // The ledger still balances exactly (finish() audits), and the
        // relay's activity is bounded by its battery.
        assert!(relay.energy.consumed_uj <= 1_000_000);
    }

    #[test]
    fn honest_runs_detect_nothing() {
        for mode in [ProtocolMode::Plain, ProtocolMode::Secured] {
            let out = run(&chain_scenario(mode, 30), 3).unwrap();
            assert!(out.detections.is_empty());
            for rep in out.nodes.values() {
                assert!(rep.blacklist.is_empty());
            }
        }
    }

    #[test]
    fn secured_and_plain_honest_runs_match_exactly() {
        let plain = run(&chain_scenario(ProtocolMode::Plain, 30), 9).unwrap();
        let secured = run(&chain_scenario(ProtocolMode::Secured, 30), 9).unwrap();
        for (addr, p) in &plain.nodes {
            let s = &secured.nodes[addr];
            assert_eq!(p.metrics.packet_tuple(), s.metrics.packet_tuple());
            assert_eq!(p.energy.consumed_uj, s.energy.consumed_uj);
        }
    }
}
