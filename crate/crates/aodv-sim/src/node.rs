//! Per-node AODV engine: route discovery, routing-table maintenance,
//! HELLO-based liveness, RERR propagation, and the data forwarding plane.
//!
//! In secured mode every received control message passes digest
//! verification before any handler runs. A failed verification is logged,
//! charged as a strike against the link-layer sender (the only identity a
//! receiver actually observes), and once strikes reach the blacklist
//! threshold the sender is blacklisted: its messages are dropped wholesale
//! and all routes through it are invalidated.
//!
//! Handlers are pure with respect to the outside world: they mutate only
//! the node's own state and return the I/O they want performed, which
//! keeps runs deterministic and nodes trivially testable.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::digest::{self, HashPolicy, IdSelector, RejectReason, SecretKey};
use crate::metrics::DropReason;
use crate::wire::{
    self, MessageBody, NodeAddress, RerrMessage, RrepMessage, RreqMessage, SecureEnvelope,
    SecurityExtension, SequenceNumber,
};

/// Simulation time in microseconds.
pub type Micros = u64;
pub const MILLIS: Micros = 1_000;
pub const SECONDS: Micros = 1_000_000;

/// Renders microseconds as fixed-point seconds ("12.345678").
pub fn format_time(t: Micros) -> String {
    format!("{}.{:06}", t / SECONDS, t % SECONDS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolMode {
    Plain,
    Secured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Payload,
    Ack,
}

/// Application packet routed by the data plane. Not an AODV message and
/// not covered by the digest mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataPacket {
    pub flow: u32,
    pub seq: u32,
    pub kind: DataKind,
    pub src: NodeAddress,
    pub dst: NodeAddress,
    pub size: u32,
}

impl fmt::Display for DataPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DataKind::Payload => "DATA",
            DataKind::Ack => "ACK",
        };
        write!(
            f,
            "{} flow={} seq={} src={} dst={}",
            kind, self.flow, self.seq, self.src, self.dst
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum RouteState {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    pub next_hop: NodeAddress,
    pub hop_count: u32,
    pub dest_seq: SequenceNumber,
    pub seq_valid: bool,
    pub expiry: Micros,
    pub state: RouteState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub t: Micros,
    pub offender: NodeAddress,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Copy)]
struct Discovery {
    attempts: u32,
    next_retry: Micros,
}

/// Everything a node asks the lower layer to do in response to one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Trace-only record of a reception.
    Recv { msg: String },
    Broadcast {
        env: SecureEnvelope,
        forwarded: bool,
    },
    Unicast {
        next_hop: NodeAddress,
        env: SecureEnvelope,
        forwarded: bool,
    },
    DataOut {
        next_hop: NodeAddress,
        pkt: DataPacket,
        forwarded: bool,
    },
    DeliverUp { pkt: DataPacket },
    Detect {
        offender: NodeAddress,
        reason: RejectReason,
    },
    Drop {
        reason: DropReason,
        msg: String,
    },
}

/// Result of feeding received control bytes through the node.
#[derive(Debug, Clone)]
pub struct RxOutcome {
    /// Whether the message survived decode, blacklist and (in secured
    /// mode) digest verification, i.e. reached a protocol handler.
    pub accepted: bool,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub mode: ProtocolMode,
    /// Group key; `None` on nodes that were never provisioned (adversaries).
    pub key: Option<SecretKey>,
    pub hash_policy: HashPolicy,
    pub blacklist_threshold: u32,
    pub hello_interval: Micros,
    pub route_lifetime: Micros,
    pub rreq_cache_lifetime: Micros,
    pub allowed_hello_loss: u32,
    pub net_diameter: u8,
    pub rreq_retry_base: Micros,
    pub rreq_retry_cap: Micros,
    pub pending_cap: usize,
    pub gratuitous_rrep: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            mode: ProtocolMode::Plain,
            key: None,
            hash_policy: HashPolicy::RoundRobin,
            blacklist_threshold: 1,
            hello_interval: 1000 * MILLIS,
            route_lifetime: 3000 * MILLIS,
            rreq_cache_lifetime: 3000 * MILLIS,
            allowed_hello_loss: 2,
            net_diameter: 35,
            rreq_retry_base: 1000 * MILLIS,
            rreq_retry_cap: 16_000 * MILLIS,
            pending_cap: 64,
            gratuitous_rrep: false,
        }
    }
}

pub struct Node {
    addr: NodeAddress,
    cfg: NodeConfig,
    own_seq: u32,
    next_rreq_id: u32,
    routes: BTreeMap<NodeAddress, RouteEntry>,
    rreq_seen: BTreeMap<(NodeAddress, u32), Micros>,
    neighbors: BTreeMap<NodeAddress, Micros>,
    blacklist: BTreeSet<NodeAddress>,
    strikes: BTreeMap<NodeAddress, u32>,
    detections: Vec<Detection>,
    selector: IdSelector,
    pending: BTreeMap<NodeAddress, VecDeque<DataPacket>>,
    discovery: BTreeMap<NodeAddress, Discovery>,
    next_hello_at: Micros,
}

impl Node {
    pub fn new(addr: NodeAddress, cfg: NodeConfig, seed: u64) -> Self {
        assert!(!addr.is_unspecified(), "node address 0 is reserved");
        let selector = IdSelector::new(cfg.hash_policy, seed, addr.0);
        let next_hello_at = cfg.hello_interval;
        Node {
            addr,
            cfg,
            own_seq: 1, // 0 stays reserved as "unknown" in RREQ fields
            next_rreq_id: 1,
            routes: BTreeMap::new(),
            rreq_seen: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            blacklist: BTreeSet::new(),
            strikes: BTreeMap::new(),
            detections: Vec::new(),
            selector,
            pending: BTreeMap::new(),
            discovery: BTreeMap::new(),
            next_hello_at,
        }
    }

    pub fn addr(&self) -> NodeAddress {
        self.addr
    }

    pub fn own_seq(&self) -> u32 {
        self.own_seq
    }

    pub fn routes(&self) -> &BTreeMap<NodeAddress, RouteEntry> {
        &self.routes
    }

    pub fn neighbors(&self) -> &BTreeMap<NodeAddress, Micros> {
        &self.neighbors
    }

    pub fn blacklist(&self) -> &BTreeSet<NodeAddress> {
        &self.blacklist
    }

    pub fn detection_log(&self) -> &[Detection] {
        &self.detections
    }

    /// Valid, unexpired entry for `dst`, if any.
    pub fn valid_route(&self, dst: NodeAddress, now: Micros) -> Option<&RouteEntry> {
        self.routes
            .get(&dst)
            .filter(|e| e.state == RouteState::Valid && e.expiry > now)
    }

    fn seal_new(&mut self, body: MessageBody) -> SecureEnvelope {
        let ext = match (self.cfg.mode, &self.cfg.key) {
            (ProtocolMode::Secured, Some(key)) => {
                let id = self.selector.next();
                Some(digest::sign(&body, key, id).expect("own messages are well-formed"))
            }
            _ => None,
        };
        SecureEnvelope { body, ext }
    }

    /// Re-signs a body about to be forwarded. Nodes without a key cannot
    /// re-sign and forward the (now stale) extension unchanged, which
    /// honest receivers will reject.
    fn reseal_forward(
        &mut self,
        body: MessageBody,
        stale: Option<SecurityExtension>,
    ) -> SecureEnvelope {
        match (self.cfg.mode, &self.cfg.key) {
            (ProtocolMode::Secured, Some(key)) => {
                let id = self.selector.next();
                let ext = digest::sign(&body, key, id).expect("forwarded messages are well-formed");
                SecureEnvelope {
                    body,
                    ext: Some(ext),
                }
            }
            _ => SecureEnvelope { body, ext: stale },
        }
    }

    fn update_route(
        &mut self,
        dest: NodeAddress,
        next_hop: NodeAddress,
        hop_count: u32,
        dest_seq: SequenceNumber,
        seq_valid: bool,
        now: Micros,
    ) -> bool {
        if dest == self.addr || self.blacklist.contains(&next_hop) {
            return false;
        }
        let fresh = RouteEntry {
            next_hop,
            hop_count,
            dest_seq,
            seq_valid,
            expiry: now + self.cfg.route_lifetime,
            state: RouteState::Valid,
        };
        match self.routes.get_mut(&dest) {
            None => {
                self.routes.insert(dest, fresh);
                true
            }
            Some(e) => {
                let accept = !e.seq_valid
                    || dest_seq > e.dest_seq
                    || (dest_seq == e.dest_seq && e.state == RouteState::Invalid)
                    || (dest_seq == e.dest_seq && hop_count < e.hop_count);
                if accept {
                    *e = fresh;
                    true
                } else {
                    // Same route re-learned: keep it alive.
                    if e.state == RouteState::Valid
                        && e.next_hop == next_hop
                        && e.dest_seq == dest_seq
                        && e.hop_count == hop_count
                    {
                        e.expiry = e.expiry.max(fresh.expiry);
                    }
                    false
                }
            }
        }
    }

    fn refresh_route(&mut self, dest: NodeAddress, now: Micros) {
        let lifetime = self.cfg.route_lifetime;
        if let Some(e) = self.routes.get_mut(&dest) {
            if e.state == RouteState::Valid {
                e.expiry = e.expiry.max(now + lifetime);
            }
        }
    }

    fn invalidate_routes_via(&mut self, via: NodeAddress) -> Vec<(NodeAddress, SequenceNumber)> {
        let mut out = Vec::new();
        for (dest, e) in self.routes.iter_mut() {
            if e.state == RouteState::Valid && e.next_hop == via {
                e.state = RouteState::Invalid;
                e.dest_seq = SequenceNumber(e.dest_seq.0.wrapping_add(1));
                out.push((*dest, e.dest_seq));
            }
        }
        out
    }

    fn drain_pending(&mut self, dest: NodeAddress, now: Micros, actions: &mut Vec<Action>) {
        let Some(next_hop) = self.valid_route(dest, now).map(|e| e.next_hop) else {
            return;
        };
        let Some(mut queue) = self.pending.remove(&dest) else {
            return;
        };
        self.discovery.remove(&dest);
        self.refresh_route(dest, now);
        while let Some(pkt) = queue.pop_front() {
            let forwarded = pkt.src != self.addr;
            actions.push(Action::DataOut {
                next_hop,
                pkt,
                forwarded,
            });
        }
    }

    /// Starts (or retries) a route discovery toward `dest`.
    pub fn originate_rreq(&mut self, dest: NodeAddress, now: Micros) -> Vec<Action> {
        self.own_seq += 1;
        let rreq_id = self.next_rreq_id;
        self.next_rreq_id += 1;
        let dest_seq = self
            .routes
            .get(&dest)
            .filter(|e| e.seq_valid)
            .map(|e| e.dest_seq)
            .unwrap_or(SequenceNumber(0)); // 0 = unknown
        let msg = RreqMessage {
            flag_j: false,
            flag_r: false,
            flag_g: self.cfg.gratuitous_rrep,
            hop_count: 0,
            rreq_id,
            dest_addr: dest,
            dest_seq,
            orig_addr: self.addr,
            orig_seq: SequenceNumber(self.own_seq),
        };
        self.rreq_seen
            .insert((self.addr, rreq_id), now + self.cfg.rreq_cache_lifetime);
        let entry = self.discovery.entry(dest).or_insert(Discovery {
            attempts: 0,
            next_retry: 0,
        });
        let backoff = (self.cfg.rreq_retry_base << entry.attempts.min(31))
            .min(self.cfg.rreq_retry_cap);
        entry.attempts += 1;
        entry.next_retry = now + backoff;
        let env = self.seal_new(MessageBody::Rreq(msg));
        vec![Action::Broadcast {
            env,
            forwarded: false,
        }]
    }

    /// Entry point for all received control bytes.
    pub fn receive_pipeline(
        &mut self,
        bytes: &[u8],
        sender: NodeAddress,
        now: Micros,
    ) -> RxOutcome {
        if self.blacklist.contains(&sender) {
            let msg = format!("control[{}B] from {}", bytes.len(), sender);
            return RxOutcome {
                accepted: false,
                actions: vec![
                    Action::Recv { msg: msg.clone() },
                    Action::Drop {
                        reason: DropReason::Blacklisted,
                        msg,
                    },
                ],
            };
        }

        let env = match wire::decode(bytes, self.cfg.mode == ProtocolMode::Secured) {
            Ok(env) => env,
            Err(e) => {
                return RxOutcome {
                    accepted: false,
                    actions: vec![
                        Action::Recv {
                            msg: format!("malformed[{}B]", bytes.len()),
                        },
                        Action::Drop {
                            reason: DropReason::Decode,
                            msg: format!("from {}: {}", sender, e),
                        },
                    ],
                };
            }
        };

        let mut actions = vec![Action::Recv {
            msg: env.to_string(),
        }];

        if self.cfg.mode == ProtocolMode::Secured {
            // Nodes without a key cannot verify and process everything;
            // that is the adversary's problem, not the protocol's.
            if let Some(key) = self.cfg.key.clone() {
                if let Err(reason) = digest::verify(&env, &key) {
                    self.detections.push(Detection {
                        t: now,
                        offender: sender,
                        reason,
                    });
                    let strikes = self.strikes.entry(sender).or_insert(0);
                    *strikes += 1;
                    let struck_out = *strikes >= self.cfg.blacklist_threshold;
                    actions.push(Action::Drop {
                        reason: DropReason::Verify,
                        msg: format!("{} from {}: {}", env, sender, reason),
                    });
                    if struck_out && !self.blacklist.contains(&sender) {
                        self.blacklist.insert(sender);
                        self.neighbors.remove(&sender);
                        self.invalidate_routes_via(sender);
                        actions.push(Action::Detect {
                            offender: sender,
                            reason,
                        });
                    }
                    return RxOutcome {
                        accepted: false,
                        actions,
                    };
                }
            }
        }

        self.neighbors.insert(sender, now);
        let more = match env.body.clone() {
            MessageBody::Rreq(m) => self.handle_rreq(m, env.ext, sender, now),
            MessageBody::Rrep(m) => self.handle_rrep(m, env.ext, sender, now),
            MessageBody::Rerr(m) => self.handle_rerr(m, env.ext, sender, now),
        };
        actions.extend(more);
        RxOutcome {
            accepted: true,
            actions,
        }
    }

    pub fn handle_rreq(
        &mut self,
        msg: RreqMessage,
        ext: Option<SecurityExtension>,
        sender: NodeAddress,
        now: Micros,
    ) -> Vec<Action> {
        let mut actions = Vec::new();
        if msg.orig_addr == self.addr {
            return actions; // own flood echoed back
        }
        let cache_key = (msg.orig_addr, msg.rreq_id);
        if self
            .rreq_seen
            .get(&cache_key)
            .is_some_and(|&expiry| expiry > now)
        {
            return actions; // duplicate
        }
        self.rreq_seen
            .insert(cache_key, now + self.cfg.rreq_cache_lifetime);

        self.update_route(
            msg.orig_addr,
            sender,
            u32::from(msg.hop_count) + 1,
            msg.orig_seq,
            true,
            now,
        );

        if msg.dest_addr == self.addr {
            // We are the target; answer with our own sequence number.
            self.own_seq = self.own_seq.max(msg.dest_seq.0);
            let rrep = RrepMessage {
                flag_r: false,
                flag_a: false,
                prefix_sz: 0,
                hop_count: 0,
                dest_addr: self.addr,
                dest_seq: SequenceNumber(self.own_seq),
                orig_addr: msg.orig_addr,
                lifetime_ms: (self.cfg.route_lifetime / MILLIS) as u32,
            };
            let env = self.seal_new(MessageBody::Rrep(rrep));
            actions.push(Action::Unicast {
                next_hop: sender,
                env,
                forwarded: false,
            });
            return actions;
        }

        // Intermediate reply from a route at least as fresh as requested.
        if let Some(e) = self.valid_route(msg.dest_addr, now) {
            if e.seq_valid && e.dest_seq >= msg.dest_seq {
                let entry = *e;
                let rrep = RrepMessage {
                    flag_r: false,
                    flag_a: false,
                    prefix_sz: 0,
                    hop_count: entry.hop_count.min(255) as u8,
                    dest_addr: msg.dest_addr,
                    dest_seq: entry.dest_seq,
                    orig_addr: msg.orig_addr,
                    lifetime_ms: (((entry.expiry - now) / MILLIS).max(1)) as u32,
                };
                let env = self.seal_new(MessageBody::Rrep(rrep));
                actions.push(Action::Unicast {
                    next_hop: sender,
                    env,
                    forwarded: false,
                });
                if msg.flag_g {
                    // Tell the destination about the originator too.
                    let grat = RrepMessage {
                        flag_r: false,
                        flag_a: false,
                        prefix_sz: 0,
                        hop_count: msg.hop_count.saturating_add(1),
                        dest_addr: msg.orig_addr,
                        dest_seq: msg.orig_seq,
                        orig_addr: msg.dest_addr,
                        lifetime_ms: (self.cfg.route_lifetime / MILLIS) as u32,
                    };
                    let env = self.seal_new(MessageBody::Rrep(grat));
                    actions.push(Action::Unicast {
                        next_hop: entry.next_hop,
                        env,
                        forwarded: false,
                    });
                }
                return actions;
            }
        }

        // Relay the flood.
        if msg.hop_count == u8::MAX || msg.hop_count + 1 > self.cfg.net_diameter {
            actions.push(Action::Drop {
                reason: DropReason::HopLimit,
                msg: MessageBody::Rreq(msg).to_string(),
            });
            return actions;
        }
        let relayed = RreqMessage {
            hop_count: msg.hop_count + 1,
            ..msg
        };
        let env = self.reseal_forward(MessageBody::Rreq(relayed), ext);
        actions.push(Action::Broadcast {
            env,
            forwarded: true,
        });
        actions
    }

    pub fn handle_rrep(
        &mut self,
        msg: RrepMessage,
        ext: Option<SecurityExtension>,
        sender: NodeAddress,
        now: Micros,
    ) -> Vec<Action> {
        let mut actions = Vec::new();

        if msg.is_hello_from(sender) {
            self.neighbors.insert(sender, now);
            return actions;
        }

        if msg.dest_addr != self.addr {
            self.update_route(
                msg.dest_addr,
                sender,
                u32::from(msg.hop_count) + 1,
                msg.dest_seq,
                true,
                now,
            );
        }

        if msg.orig_addr == self.addr {
            // Our discovery completed; release anything waiting on it.
            self.drain_pending(msg.dest_addr, now, &mut actions);
            return actions;
        }

        match self.valid_route(msg.orig_addr, now).map(|e| e.next_hop) {
            Some(rev_hop) => {
                if msg.hop_count == u8::MAX {
                    actions.push(Action::Drop {
                        reason: DropReason::HopLimit,
                        msg: MessageBody::Rrep(msg).to_string(),
                    });
                    return actions;
                }
                let fwd = RrepMessage {
                    hop_count: msg.hop_count + 1,
                    ..msg
                };
                self.refresh_route(msg.orig_addr, now);
                let env = self.reseal_forward(MessageBody::Rrep(fwd), ext);
                actions.push(Action::Unicast {
                    next_hop: rev_hop,
                    env,
                    forwarded: true,
                });
                self.drain_pending(msg.dest_addr, now, &mut actions);
            }
            None => {
                actions.push(Action::Drop {
                    reason: DropReason::NoReverseRoute,
                    msg: MessageBody::Rrep(msg).to_string(),
                });
            }
        }
        actions
    }

    pub fn handle_rerr(
        &mut self,
        msg: RerrMessage,
        ext: Option<SecurityExtension>,
        sender: NodeAddress,
        _now: Micros,
    ) -> Vec<Action> {
        let mut invalidated = Vec::new();
        for (dest, seq) in &msg.unreachable {
            if let Some(e) = self.routes.get_mut(dest) {
                if e.state == RouteState::Valid && e.next_hop == sender && e.dest_seq <= *seq {
                    e.state = RouteState::Invalid;
                    e.dest_seq = *seq;
                    invalidated.push((*dest, *seq));
                }
            }
        }
        if invalidated.is_empty() {
            return Vec::new();
        }
        let body = MessageBody::Rerr(RerrMessage {
            flag_n: msg.flag_n,
            unreachable: invalidated,
        });
        let env = self.reseal_forward(body, ext);
        vec![Action::Broadcast {
            env,
            forwarded: true,
        }]
    }

    /// Hands the node one of its own application packets to route.
    pub fn originate_data(&mut self, pkt: DataPacket, now: Micros) -> Vec<Action> {
        let mut actions = Vec::new();
        if pkt.dst == self.addr {
            actions.push(Action::DeliverUp { pkt });
            return actions;
        }
        if let Some(next_hop) = self.valid_route(pkt.dst, now).map(|e| e.next_hop) {
            self.refresh_route(pkt.dst, now);
            actions.push(Action::DataOut {
                next_hop,
                pkt,
                forwarded: false,
            });
            return actions;
        }

        let queue = self.pending.entry(pkt.dst).or_default();
        let dup = queue
            .iter()
            .any(|q| q.flow == pkt.flow && q.seq == pkt.seq && q.kind == pkt.kind);
        if !dup {
            if queue.len() >= self.cfg.pending_cap {
                actions.push(Action::Drop {
                    reason: DropReason::BufferFull,
                    msg: pkt.to_string(),
                });
            } else {
                queue.push_back(pkt);
            }
        }

        let retry_due = match self.discovery.get(&pkt.dst) {
            Some(d) => now >= d.next_retry,
            None => true,
        };
        if retry_due {
            actions.extend(self.originate_rreq(pkt.dst, now));
        }
        actions
    }

    /// Handles a data packet arriving from a neighbor.
    pub fn receive_data(&mut self, pkt: DataPacket, sender: NodeAddress, now: Micros) -> Vec<Action> {
        let mut actions = vec![Action::Recv {
            msg: pkt.to_string(),
        }];
        if self.blacklist.contains(&sender) {
            actions.push(Action::Drop {
                reason: DropReason::Blacklisted,
                msg: format!("{} from {}", pkt, sender),
            });
            return actions;
        }
        self.neighbors.insert(sender, now);
        if pkt.dst == self.addr {
            actions.push(Action::DeliverUp { pkt });
            return actions;
        }
        if let Some(next_hop) = self.valid_route(pkt.dst, now).map(|e| e.next_hop) {
            self.refresh_route(pkt.dst, now);
            actions.push(Action::DataOut {
                next_hop,
                pkt,
                forwarded: true,
            });
            return actions;
        }
        actions.push(Action::Drop {
            reason: DropReason::NoRoute,
            msg: pkt.to_string(),
        });
        // Tell upstream users the destination became unreachable.
        if let Some(e) = self.routes.get(&pkt.dst) {
            let body = MessageBody::Rerr(RerrMessage {
                flag_n: false,
                unreachable: vec![(pkt.dst, e.dest_seq)],
            });
            let env = self.seal_new(body);
            actions.push(Action::Broadcast {
                env,
                forwarded: false,
            });
        }
        actions
    }

    /// Periodic upkeep: HELLO emission, neighbor timeouts, route and cache
    /// expiry, and pending-discovery retries.
    pub fn timer_tick(&mut self, now: Micros) -> Vec<Action> {
        let mut actions = Vec::new();

        if now >= self.next_hello_at {
            while self.next_hello_at <= now {
                self.next_hello_at += self.cfg.hello_interval;
            }
            let hello = RrepMessage {
                flag_r: false,
                flag_a: false,
                prefix_sz: 0,
                hop_count: 0,
                dest_addr: self.addr,
                dest_seq: SequenceNumber(self.own_seq),
                orig_addr: self.addr,
                lifetime_ms: (u64::from(self.cfg.allowed_hello_loss) * self.cfg.hello_interval
                    / MILLIS) as u32,
            };
            let env = self.seal_new(MessageBody::Rrep(hello));
            actions.push(Action::Broadcast {
                env,
                forwarded: false,
            });
        }

        // Link-failure detection via missed HELLOs.
        let cutoff = u64::from(self.cfg.allowed_hello_loss) * self.cfg.hello_interval;
        let lost: Vec<NodeAddress> = self
            .neighbors
            .iter()
            .filter(|(_, &last)| now.saturating_sub(last) > cutoff)
            .map(|(&a, _)| a)
            .collect();
        let mut unreachable = Vec::new();
        for n in lost {
            self.neighbors.remove(&n);
            unreachable.extend(self.invalidate_routes_via(n));
        }
        if !unreachable.is_empty() {
            let body = MessageBody::Rerr(RerrMessage {
                flag_n: false,
                unreachable,
            });
            let env = self.seal_new(body);
            actions.push(Action::Broadcast {
                env,
                forwarded: false,
            });
        }

        for e in self.routes.values_mut() {
            if e.state == RouteState::Valid && e.expiry <= now {
                e.state = RouteState::Invalid;
            }
        }
        self.rreq_seen.retain(|_, &mut expiry| expiry > now);

        // Re-drive discoveries that still have traffic waiting.
        let dests: Vec<NodeAddress> = self.pending.keys().copied().collect();
        for dst in dests {
            if self.pending.get(&dst).is_none_or(|q| q.is_empty()) {
                self.pending.remove(&dst);
                self.discovery.remove(&dst);
                continue;
            }
            if self.valid_route(dst, now).is_some() {
                self.drain_pending(dst, now, &mut actions);
                continue;
            }
            let retry_due = match self.discovery.get(&dst) {
                Some(d) => now >= d.next_retry,
                None => true,
            };
            if retry_due {
                actions.extend(self.originate_rreq(dst, now));
            }
        }

        actions
    }
}
