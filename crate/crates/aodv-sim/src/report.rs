//! Run reports: an aligned text table for humans and a stable JSON form
//! for golden tests and tooling. Both echo the effective configuration so
//! a report alone is enough to reproduce its run.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::metrics::format_joules;
use crate::node::{format_time, ProtocolMode};
use crate::scenario::Scenario;
use crate::sim::{RunOutput, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Structured,
}

pub fn report(scenario: &Scenario, output: &RunOutput, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(scenario, output),
        ReportFormat::Structured => render_structured(scenario, output),
    }
}

fn protocol_name(mode: ProtocolMode) -> &'static str {
    match mode {
        ProtocolMode::Plain => "AODV",
        ProtocolMode::Secured => "AODV with message digest",
    }
}

pub fn render_table(scn: &Scenario, out: &RunOutput) -> String {
    let mut s = String::new();
    s.push_str(&format!("Routing protocol: {}\n", protocol_name(scn.protocol)));
    s.push_str(&format!(
        "Scenario: {}  Seed: {}  Duration: {} s\n",
        scn.name,
        out.seed,
        format_time(out.duration)
    ));
    s.push_str(&format!(
        "Config: range={}m latency={}us jitter={}us hello={}ms route_lifetime={}ms \
         blacklist_threshold={} energy(init={} tx={} rx={} J)\n\n",
        scn.radio_range_m,
        scn.latency,
        scn.jitter,
        scn.hello_interval / 1000,
        scn.route_lifetime / 1000,
        scn.blacklist_threshold,
        format_joules(scn.energy.initial_uj),
        format_joules(scn.energy.tx_cost_uj),
        format_joules(scn.energy.rx_cost_uj),
    ));

    s.push_str("Node | Generated | Sent | Forwarded | Received\n");
    s.push_str("-----+-----------+------+-----------+---------\n");
    for (addr, rep) in &out.nodes {
        let m = &rep.metrics;
        s.push_str(&format!(
            "{:>4} | {:>9} | {:>4} | {:>9} | {:>8}\n",
            addr.0, m.generated, m.sent, m.forwarded, m.received
        ));
    }

    s.push_str("\nEnergy (J)\n");
    s.push_str("Node | Consumed | Remaining | TxEvents | RxEvents\n");
    for (addr, rep) in &out.nodes {
        s.push_str(&format!(
            "{:>4} | {:>8} | {:>9} | {:>8} | {:>8}\n",
            addr.0,
            format_joules(rep.energy.consumed_uj),
            format_joules(rep.energy.remaining_uj()),
            rep.energy.tx_events,
            rep.energy.rx_events
        ));
    }

    s.push_str("\nDetections\n");
    if out.detections.is_empty() {
        s.push_str("  (none)\n");
    } else {
        for d in &out.detections {
            s.push_str(&format!(
                "  t={} detector={} offender={} reason={}\n",
                format_time(d.t),
                d.detector,
                d.offender,
                d.reason
            ));
        }
    }

    if !out.flows.is_empty() {
        s.push_str("\nFlows\n");
        for (i, (f, cfg)) in out.flows.iter().zip(&scn.flows).enumerate() {
            s.push_str(&format!(
                "  flow {}: {} -> {}  data_generated={} delivered={} acks={} last_delivery={}\n",
                i,
                cfg.src,
                cfg.dst,
                f.data_generated,
                f.data_delivered,
                f.acks_delivered,
                f.last_delivery
                    .map(format_time)
                    .unwrap_or_else(|| "-".to_string()),
            ));
        }
    }
    s
}

#[derive(Serialize)]
struct StructuredReport {
    scenario: String,
    protocol: &'static str,
    seed: u64,
    duration_us: u64,
    config: ConfigEcho,
    nodes: Vec<NodeRow>,
    detections: Vec<DetectionRow>,
    flows: Vec<FlowRow>,
    total_deliveries: u64,
}

#[derive(Serialize)]
struct ConfigEcho {
    radio_range_m: f64,
    latency_us: u64,
    jitter_us: u64,
    hello_interval_us: u64,
    route_lifetime_us: u64,
    rreq_cache_us: u64,
    allowed_hello_loss: u32,
    blacklist_threshold: u32,
    energy_initial_uj: u64,
    energy_tx_cost_uj: u64,
    energy_rx_cost_uj: u64,
}

#[derive(Serialize)]
struct NodeRow {
    node: u32,
    generated: u64,
    sent: u64,
    forwarded: u64,
    received: u64,
    delivered: u64,
    accepted_tampered: u64,
    drops: BTreeMap<String, u64>,
    energy_consumed_uj: u64,
    energy_remaining_uj: u64,
    tx_events: u64,
    rx_events: u64,
    routes: Vec<RouteRow>,
    blacklist: Vec<u32>,
}

#[derive(Serialize)]
struct RouteRow {
    dest: u32,
    next_hop: u32,
    hop_count: u32,
    dest_seq: u32,
    state: String,
}

#[derive(Serialize)]
struct DetectionRow {
    t_us: u64,
    detector: u32,
    offender: u32,
    reason: String,
}

#[derive(Serialize)]
struct FlowRow {
    src: u32,
    dst: u32,
    data_generated: u64,
    data_delivered: u64,
    acks_generated: u64,
    acks_delivered: u64,
    first_delivery_us: Option<u64>,
    last_delivery_us: Option<u64>,
}

pub fn render_structured(scn: &Scenario, out: &RunOutput) -> String {
    let nodes = out
        .nodes
        .iter()
        .map(|(addr, rep)| NodeRow {
            node: addr.0,
            generated: rep.metrics.generated,
            sent: rep.metrics.sent,
            forwarded: rep.metrics.forwarded,
            received: rep.metrics.received,
            delivered: rep.metrics.delivered,
            accepted_tampered: rep.metrics.accepted_tampered,
            drops: rep
                .metrics
                .drops
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            energy_consumed_uj: rep.energy.consumed_uj,
            energy_remaining_uj: rep.energy.remaining_uj(),
            tx_events: rep.energy.tx_events,
            rx_events: rep.energy.rx_events,
            routes: rep
                .routes
                .iter()
                .map(|r| RouteRow {
                    dest: r.dest.0,
                    next_hop: r.next_hop.0,
                    hop_count: r.hop_count,
                    dest_seq: r.dest_seq,
                    state: format!("{:?}", r.state).to_lowercase(),
                })
                .collect(),
            blacklist: rep.blacklist.iter().map(|a| a.0).collect(),
        })
        .collect();

    let report = StructuredReport {
        scenario: scn.name.clone(),
        protocol: protocol_name(scn.protocol),
        seed: out.seed,
        duration_us: out.duration,
        config: ConfigEcho {
            radio_range_m: scn.radio_range_m,
            latency_us: scn.latency,
            jitter_us: scn.jitter,
            hello_interval_us: scn.hello_interval,
            route_lifetime_us: scn.route_lifetime,
            rreq_cache_us: scn.rreq_cache_lifetime,
            allowed_hello_loss: scn.allowed_hello_loss,
            blacklist_threshold: scn.blacklist_threshold,
            energy_initial_uj: scn.energy.initial_uj,
            energy_tx_cost_uj: scn.energy.tx_cost_uj,
            energy_rx_cost_uj: scn.energy.rx_cost_uj,
        },
        nodes,
        detections: out
            .detections
            .iter()
            .map(|d| DetectionRow {
                t_us: d.t,
                detector: d.detector.0,
                offender: d.offender.0,
                reason: d.reason.clone(),
            })
            .collect(),
        flows: out
            .flows
            .iter()
            .zip(&scn.flows)
            .map(|(f, cfg)| FlowRow {
                src: cfg.src.0,
                dst: cfg.dst.0,
                data_generated: f.data_generated,
                data_delivered: f.data_delivered,
                acks_generated: f.acks_generated,
                acks_delivered: f.acks_delivered,
                first_delivery_us: f.first_delivery,
                last_delivery_us: f.last_delivery,
            })
            .collect(),
        total_deliveries: out.total_deliveries,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    json
}

/// Quick check that a trace contains an event kind, used by tests.
pub fn trace_has_event(out: &RunOutput, ev: TraceEvent) -> bool {
    out.trace.iter().any(|r| r.ev == ev)
}
