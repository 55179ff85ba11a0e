//! Scenario files: a flat, line-oriented key-value grammar with repeated
//! `node`, `flow`, `link` and `malicious` stanzas.
//!
//! ```text
//! # comment
//! protocol secured                 # plain | secured
//! duration_s 150
//! seed 1
//! key 6d616e65742d67726f75702d6b6579   # hex, secured runs only
//! hash_policy round-robin          # round-robin | md5 | sha1
//! radio_range_m 200
//! latency_us 1000
//! jitter_us 100
//! hello_interval_ms 1000
//! route_lifetime_ms 3000
//! rreq_cache_ms 3000
//! allowed_hello_loss 2
//! blacklist_threshold 1
//! energy initial_j=10 tx_j=0.2 rx_j=0.1
//! node 1 0 0                       # addr x_m y_m
//! node 2 400 0
//! node 3 200 0
//! link 1 3                         # optional explicit adjacency override
//! flow src=1 dst=2 size=512 interval_ms=500 start_s=1 stop_s=145 reliable=true
//! malicious 3:tamper-hop:0
//! ```
//!
//! Behaviors: `honest`, `tamper-hop:<set_to>`, `tamper-seq:<delta>`,
//! `drop-all`, `drop-routing`, `fabricate-rrep:<dest>:<seq>:<hops>`,
//! `spoof:<addr>`. Keys may be written `key value` or `key = value`.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::adversary::AdversaryBehavior;
use crate::digest::{HashFunctionId, HashPolicy, SecretKey};
use crate::node::{Micros, ProtocolMode, MILLIS, SECONDS};
use crate::wire::{NodeAddress, SequenceNumber};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioNode {
    pub addr: NodeAddress,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficFlow {
    pub src: NodeAddress,
    pub dst: NodeAddress,
    pub packet_size: u32,
    pub interval: Micros,
    pub start: Micros,
    pub stop: Micros,
    pub reliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyParams {
    pub initial_uj: u64,
    pub tx_cost_uj: u64,
    pub rx_cost_uj: u64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            initial_uj: 10_000_000, // 10 J
            tx_cost_uj: 200_000,    // 0.2 J per transmission
            rx_cost_uj: 100_000,    // 0.1 J per reception
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub protocol: ProtocolMode,
    pub duration: Micros,
    pub seed: u64,
    pub key: Option<Vec<u8>>,
    pub hash_policy: HashPolicy,
    pub radio_range_m: f64,
    pub latency: Micros,
    pub jitter: Micros,
    pub hello_interval: Micros,
    pub route_lifetime: Micros,
    pub rreq_cache_lifetime: Micros,
    pub allowed_hello_loss: u32,
    pub blacklist_threshold: u32,
    pub energy: EnergyParams,
    pub nodes: Vec<ScenarioNode>,
    pub links: Vec<(NodeAddress, NodeAddress)>,
    pub flows: Vec<TrafficFlow>,
    pub malicious: Vec<(NodeAddress, AdversaryBehavior)>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "unnamed".to_string(),
            protocol: ProtocolMode::Plain,
            duration: 150 * SECONDS,
            seed: 1,
            key: None,
            hash_policy: HashPolicy::RoundRobin,
            radio_range_m: 250.0,
            latency: 1 * MILLIS,
            jitter: 100, // microseconds
            hello_interval: 1000 * MILLIS,
            route_lifetime: 3000 * MILLIS,
            rreq_cache_lifetime: 3000 * MILLIS,
            allowed_hello_loss: 2,
            blacklist_threshold: 1,
            energy: EnergyParams::default(),
            nodes: Vec::new(),
            links: Vec::new(),
            flows: Vec::new(),
            malicious: Vec::new(),
        }
    }
}

pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".to_string());
    let scn = Scenario::parse_str(&name, &text, &path.display().to_string())?;
    scn.validate()?;
    Ok(scn)
}

fn parse_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.len() % 2 != 0 {
        return Err("hex string has odd length".to_string());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|e| e.to_string()))
        .collect()
}

fn seconds_to_micros(v: f64) -> Micros {
    (v * SECONDS as f64).round() as Micros
}

fn joules_to_micro(v: f64) -> u64 {
    (v * 1_000_000.0).round() as u64
}

pub fn parse_behavior(spec: &str) -> Result<AdversaryBehavior, String> {
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or_default();
    let mut arg = || parts.next().ok_or_else(|| format!("{kind}: missing parameter"));
    let behavior = match kind {
        "honest" => AdversaryBehavior::Honest,
        "tamper-hop" => AdversaryBehavior::TamperHopCount {
            set_to: arg()?.parse().map_err(|e| format!("tamper-hop: {e}"))?,
        },
        "tamper-seq" => AdversaryBehavior::TamperSeq {
            delta: arg()?.parse().map_err(|e| format!("tamper-seq: {e}"))?,
        },
        "drop-all" => AdversaryBehavior::DropAll,
        "drop-routing" => AdversaryBehavior::DropRouting,
        "fabricate-rrep" => AdversaryBehavior::FabricateRrep {
            advertised_dest: NodeAddress(
                arg()?.parse().map_err(|e| format!("fabricate-rrep: {e}"))?,
            ),
            fake_seq: SequenceNumber(
                arg()?.parse().map_err(|e| format!("fabricate-rrep: {e}"))?,
            ),
            fake_hops: arg()?.parse().map_err(|e| format!("fabricate-rrep: {e}"))?,
        },
        "spoof" => AdversaryBehavior::SpoofOriginator {
            as_addr: NodeAddress(arg()?.parse().map_err(|e| format!("spoof: {e}"))?),
        },
        other => return Err(format!("unknown behavior '{other}'")),
    };
    if parts.next().is_some() {
        return Err(format!("{kind}: too many parameters"));
    }
    Ok(behavior)
}

struct KvPairs<'a> {
    pairs: Vec<(&'a str, &'a str)>,
    context: &'a str,
}

impl<'a> KvPairs<'a> {
    fn parse(tokens: &[&'a str], context: &'a str) -> Result<Self, String> {
        let mut pairs = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("{context}: expected key=value, got '{tok}'"))?;
            pairs.push((k, v));
        }
        Ok(KvPairs { pairs, context })
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self
            .get(key)
            .ok_or_else(|| format!("{}: missing {key}=", self.context))?;
        raw.parse()
            .map_err(|e| format!("{}: {key}: {e}", self.context))
    }

    fn optional<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|e| format!("{}: {key}: {e}", self.context)),
        }
    }
}

impl Scenario {
    /// Parses scenario text. `path` appears in error positions only.
    pub fn parse_str(name: &str, text: &str, path: &str) -> Result<Scenario, ScenarioError> {
        let mut scn = Scenario {
            name: name.to_string(),
            ..Scenario::default()
        };
        let mut flow_stops: Vec<Option<Micros>> = Vec::new();

        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |msg: String| ScenarioError::Parse {
                path: path.to_string(),
                line: line_no,
                msg,
            };
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens: Vec<&str> = line.split_whitespace().collect();
            // Accept both `key value` and `key = value`.
            if tokens.len() >= 2 && tokens[1] == "=" {
                tokens.remove(1);
            }
            let key = tokens[0];
            let rest = &tokens[1..];
            let one = |what: &str| -> Result<&str, ScenarioError> {
                if rest.len() == 1 {
                    Ok(rest[0])
                } else {
                    Err(err(format!("{key}: expected one {what}")))
                }
            };

            match key {
                "protocol" => {
                    scn.protocol = match one("value")? {
                        "plain" => ProtocolMode::Plain,
                        "secured" => ProtocolMode::Secured,
                        other => return Err(err(format!("unknown protocol '{other}'"))),
                    };
                }
                "duration_s" => {
                    let v: f64 = one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                    scn.duration = seconds_to_micros(v);
                }
                "seed" => scn.seed = one("value")?.parse().map_err(|e| err(format!("{e}")))?,
                "key" => {
                    scn.key = Some(parse_hex(one("value")?).map_err(err)?);
                }
                "hash_policy" => {
                    scn.hash_policy = match one("value")? {
                        "round-robin" => HashPolicy::RoundRobin,
                        "md5" => HashPolicy::Fixed(HashFunctionId::Md5),
                        "sha1" => HashPolicy::Fixed(HashFunctionId::Sha1),
                        other => return Err(err(format!("unknown hash policy '{other}'"))),
                    };
                }
                "radio_range_m" => {
                    scn.radio_range_m = one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                }
                "latency_us" => {
                    scn.latency = one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                }
                "jitter_us" => {
                    scn.jitter = one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                }
                "hello_interval_ms" => {
                    let v: u64 = one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                    scn.hello_interval = v * MILLIS;
                }
                "route_lifetime_ms" => {
                    let v: u64 = one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                    scn.route_lifetime = v * MILLIS;
                }
                "rreq_cache_ms" => {
                    let v: u64 = one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                    scn.rreq_cache_lifetime = v * MILLIS;
                }
                "allowed_hello_loss" => {
                    scn.allowed_hello_loss =
                        one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                }
                "blacklist_threshold" => {
                    scn.blacklist_threshold =
                        one("value")?.parse().map_err(|e| err(format!("{e}")))?;
                }
                "energy" => {
                    let kv = KvPairs::parse(rest, "energy").map_err(err)?;
                    let initial: f64 = kv.optional("initial_j", 10.0).map_err(err)?;
                    let tx: f64 = kv.optional("tx_j", 0.2).map_err(err)?;
                    let rx: f64 = kv.optional("rx_j", 0.1).map_err(err)?;
                    scn.energy = EnergyParams {
                        initial_uj: joules_to_micro(initial),
                        tx_cost_uj: joules_to_micro(tx),
                        rx_cost_uj: joules_to_micro(rx),
                    };
                }
                "node" => {
                    if rest.len() != 3 {
                        return Err(err("node: expected <addr> <x> <y>".to_string()));
                    }
                    let addr: u32 = rest[0].parse().map_err(|e| err(format!("node: {e}")))?;
                    let x: f64 = rest[1].parse().map_err(|e| err(format!("node: {e}")))?;
                    let y: f64 = rest[2].parse().map_err(|e| err(format!("node: {e}")))?;
                    scn.nodes.push(ScenarioNode {
                        addr: NodeAddress(addr),
                        x,
                        y,
                    });
                }
                "link" => {
                    if rest.len() != 2 {
                        return Err(err("link: expected <a> <b>".to_string()));
                    }
                    let a: u32 = rest[0].parse().map_err(|e| err(format!("link: {e}")))?;
                    let b: u32 = rest[1].parse().map_err(|e| err(format!("link: {e}")))?;
                    scn.links.push((NodeAddress(a), NodeAddress(b)));
                }
                "flow" => {
                    let kv = KvPairs::parse(rest, "flow").map_err(err)?;
                    let src: u32 = kv.required("src").map_err(err)?;
                    let dst: u32 = kv.required("dst").map_err(err)?;
                    let size: u32 = kv.optional("size", 512).map_err(err)?;
                    let interval_ms: u64 = kv.optional("interval_ms", 500).map_err(err)?;
                    let start_s: f64 = kv.optional("start_s", 1.0).map_err(err)?;
                    let stop_s: Option<f64> = match kv.get("stop_s") {
                        None => None,
                        Some(raw) => {
                            Some(raw.parse().map_err(|e| err(format!("flow: stop_s: {e}")))?)
                        }
                    };
                    let reliable: bool = kv.optional("reliable", true).map_err(err)?;
                    scn.flows.push(TrafficFlow {
                        src: NodeAddress(src),
                        dst: NodeAddress(dst),
                        packet_size: size,
                        interval: interval_ms * MILLIS,
                        start: seconds_to_micros(start_s),
                        stop: 0, // resolved below
                        reliable,
                    });
                    flow_stops.push(stop_s.map(seconds_to_micros));
                }
                "malicious" => {
                    let spec = one("assignment")?;
                    let (addr, behavior) = spec
                        .split_once(':')
                        .ok_or_else(|| err("malicious: expected <node>:<behavior>".to_string()))?;
                    let addr: u32 = addr.parse().map_err(|e| err(format!("malicious: {e}")))?;
                    let behavior = parse_behavior(behavior).map_err(err)?;
                    scn.malicious.push((NodeAddress(addr), behavior));
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }

        for (flow, stop) in scn.flows.iter_mut().zip(flow_stops) {
            flow.stop = stop.unwrap_or(scn.duration);
        }
        Ok(scn)
    }

    /// Checks every cross-field invariant, naming the violated one.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));

        if self.nodes.is_empty() {
            return fail("scenario declares no nodes".into());
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if n.addr.is_unspecified() {
                return fail("node address 0 is reserved".into());
            }
            if !seen.insert(n.addr) {
                return fail(format!("duplicate node address {}", n.addr));
            }
            if !n.x.is_finite() || !n.y.is_finite() {
                return fail(format!("node {} has a non-finite position", n.addr));
            }
        }
        if !(self.radio_range_m > 0.0) {
            return fail("radio_range_m must be positive".into());
        }
        if self.hello_interval == 0 {
            return fail("hello_interval_ms must be positive".into());
        }
        if self.route_lifetime == 0 {
            return fail("route_lifetime_ms must be positive".into());
        }
        if self.blacklist_threshold == 0 {
            return fail("blacklist_threshold must be at least 1".into());
        }

        match (&self.protocol, &self.key) {
            (ProtocolMode::Secured, None) => {
                return fail("secured protocol requires a key".into());
            }
            (ProtocolMode::Secured, Some(bytes)) => {
                if let Err(e) = SecretKey::new(bytes.clone()) {
                    return fail(e.to_string());
                }
            }
            _ => {}
        }

        for &(a, b) in &self.links {
            for addr in [a, b] {
                if !seen.contains(&addr) {
                    return fail(format!("link references unknown node {}", addr));
                }
            }
            if a == b {
                return fail(format!("link {}-{} is a self-loop", a, b));
            }
        }

        for (i, f) in self.flows.iter().enumerate() {
            for addr in [f.src, f.dst] {
                if !seen.contains(&addr) {
                    return fail(format!("flow {i} references unknown node {}", addr));
                }
            }
            if f.src == f.dst {
                return fail(format!("flow {i} has identical endpoints"));
            }
            if f.packet_size == 0 {
                return fail(format!("flow {i} has zero packet size"));
            }
            if f.interval == 0 {
                return fail(format!("flow {i} has zero interval"));
            }
            if !(f.start < f.stop && f.stop <= self.duration) {
                return fail(format!(
                    "flow {i} must satisfy start < stop <= duration ({} < {} <= {})",
                    format_s(f.start),
                    format_s(f.stop),
                    format_s(self.duration),
                ));
            }
        }

        let mut assigned = BTreeSet::new();
        for (addr, _) in &self.malicious {
            if !seen.contains(addr) {
                return fail(format!("malicious assignment references unknown node {}", addr));
            }
            if !assigned.insert(*addr) {
                return fail(format!("node {} has more than one behavior", addr));
            }
        }
        Ok(())
    }
}

fn format_s(t: Micros) -> String {
    crate::node::format_time(t)
}

/// Ready-made scenarios used across the test suite.
pub mod test_support {
    use super::*;

    /// Three nodes in a line: 1 -- 3 -- 2, endpoints out of mutual range,
    /// one acknowledged flow from 1 to 2 across the relay 3.
    pub fn chain_scenario(protocol: ProtocolMode, duration_s: u64) -> Scenario {
        let duration = duration_s * SECONDS;
        Scenario {
            name: "chain".to_string(),
            protocol,
            duration,
            key: matches!(protocol, ProtocolMode::Secured).then(|| b"test-group-key".to_vec()),
            radio_range_m: 200.0,
            energy: EnergyParams {
                initial_uj: 1_000_000_000, // generous unless a test says otherwise
                ..EnergyParams::default()
            },
            nodes: vec![
                ScenarioNode {
                    addr: NodeAddress(1),
                    x: 0.0,
                    y: 0.0,
                },
                ScenarioNode {
                    addr: NodeAddress(2),
                    x: 400.0,
                    y: 0.0,
                },
                ScenarioNode {
                    addr: NodeAddress(3),
                    x: 200.0,
                    y: 0.0,
                },
            ],
            flows: vec![TrafficFlow {
                src: NodeAddress(1),
                dst: NodeAddress(2),
                packet_size: 512,
                interval: 500 * MILLIS,
                start: 1 * SECONDS,
                stop: duration,
                reliable: true,
            }],
            ..Scenario::default()
        }
    }

    /// Three mutually connected nodes; node 1 also reaches node 2 directly.
    pub fn triangle_scenario(protocol: ProtocolMode, duration_s: u64) -> Scenario {
        let mut scn = chain_scenario(protocol, duration_s);
        scn.name = "triangle".to_string();
        scn.nodes = vec![
            ScenarioNode {
                addr: NodeAddress(1),
                x: 0.0,
                y: 0.0,
            },
            ScenarioNode {
                addr: NodeAddress(2),
                x: 200.0,
                y: 0.0,
            },
            ScenarioNode {
                addr: NodeAddress(3),
                x: 100.0,
                y: 150.0,
            },
        ];
        scn
    }
}
