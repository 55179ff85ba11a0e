//! Per-node packet counters and the energy ledger.
//!
//! Counter semantics:
//! - `generated`: packets a node originated itself (data, ACK or routing),
//!   counted at origination even if never transmitted.
//! - `sent`: actual transmissions of own-originated packets.
//! - `forwarded`: transmissions relaying another node's packet.
//! - `received`: every packet delivered to the node, overheard broadcasts
//!   included.
//!
//! Energy is tracked in integer microjoules so the ledger check
//! `consumed == tx_events * tx_cost + rx_events * rx_cost` holds exactly.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    Blacklisted,
    Decode,
    Verify,
    NoRoute,
    NoReverseRoute,
    BufferFull,
    OutOfRange,
    NoEnergy,
    HopLimit,
    Malicious,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DropReason::Blacklisted => "blacklisted",
            DropReason::Decode => "decode-error",
            DropReason::Verify => "verify-failed",
            DropReason::NoRoute => "no-route",
            DropReason::NoReverseRoute => "no-reverse-route",
            DropReason::BufferFull => "buffer-full",
            DropReason::OutOfRange => "out-of-range",
            DropReason::NoEnergy => "no-energy",
            DropReason::HopLimit => "hop-limit",
            DropReason::Malicious => "maliciously-dropped",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub generated: u64,
    pub sent: u64,
    pub forwarded: u64,
    pub received: u64,
    pub delivered: u64,
    /// Adversary-altered or fabricated messages this node accepted and
    /// processed (simulator-side bookkeeping; a real node cannot know).
    pub accepted_tampered: u64,
    pub drops: BTreeMap<DropReason, u64>,
}

impl Metrics {
    pub fn drop_count(&self, reason: DropReason) -> u64 {
        self.drops.get(&reason).copied().unwrap_or(0)
    }

    pub fn count_drop(&mut self, reason: DropReason) {
        *self.drops.entry(reason).or_insert(0) += 1;
    }

    /// The four-column row the reports print.
    pub fn packet_tuple(&self) -> (u64, u64, u64, u64) {
        (self.generated, self.sent, self.forwarded, self.received)
    }
}

/// Battery state in microjoules. A node that cannot afford an operation
/// simply does not perform it; remaining charge never goes negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnergyMeter {
    pub initial_uj: u64,
    pub tx_cost_uj: u64,
    pub rx_cost_uj: u64,
    pub consumed_uj: u64,
    pub tx_events: u64,
    pub rx_events: u64,
}

impl EnergyMeter {
    pub fn new(initial_uj: u64, tx_cost_uj: u64, rx_cost_uj: u64) -> Self {
        EnergyMeter {
            initial_uj,
            tx_cost_uj,
            rx_cost_uj,
            consumed_uj: 0,
            tx_events: 0,
            rx_events: 0,
        }
    }

    pub fn remaining_uj(&self) -> u64 {
        self.initial_uj - self.consumed_uj
    }

    pub fn is_depleted(&self) -> bool {
        self.remaining_uj() == 0
    }

    pub fn can_tx(&self) -> bool {
        self.remaining_uj() >= self.tx_cost_uj
    }

    pub fn can_rx(&self) -> bool {
        self.remaining_uj() >= self.rx_cost_uj
    }

    pub fn pay_tx(&mut self) {
        debug_assert!(self.can_tx());
        self.consumed_uj += self.tx_cost_uj;
        self.tx_events += 1;
    }

    pub fn pay_rx(&mut self) {
        debug_assert!(self.can_rx());
        self.consumed_uj += self.rx_cost_uj;
        self.rx_events += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("energy ledger mismatch: consumed {consumed_uj} != tx {tx_events}*{tx_cost_uj} + rx {rx_events}*{rx_cost_uj}")]
    Mismatch {
        consumed_uj: u64,
        tx_events: u64,
        tx_cost_uj: u64,
        rx_events: u64,
        rx_cost_uj: u64,
    },
    #[error("transmission count mismatch: sent {sent} + forwarded {forwarded} != tx events {tx_events}")]
    TxCountMismatch {
        sent: u64,
        forwarded: u64,
        tx_events: u64,
    },
}

/// Checks that a node's consumed energy equals exactly the sum of its
/// per-packet costs, and that every transmission was counted as either
/// sent or forwarded.
pub fn energy_audit(metrics: &Metrics, energy: &EnergyMeter) -> Result<u64, AuditError> {
    let expected = energy.tx_events * energy.tx_cost_uj + energy.rx_events * energy.rx_cost_uj;
    if energy.consumed_uj != expected {
        return Err(AuditError::Mismatch {
            consumed_uj: energy.consumed_uj,
            tx_events: energy.tx_events,
            tx_cost_uj: energy.tx_cost_uj,
            rx_events: energy.rx_events,
            rx_cost_uj: energy.rx_cost_uj,
        });
    }
    if metrics.sent + metrics.forwarded != energy.tx_events {
        return Err(AuditError::TxCountMismatch {
            sent: metrics.sent,
            forwarded: metrics.forwarded,
            tx_events: energy.tx_events,
        });
    }
    Ok(energy.consumed_uj)
}

/// Renders microjoules as a fixed-point joule string ("4.000000").
pub fn format_joules(uj: u64) -> String {
    format!("{}.{:06}", uj / 1_000_000, uj % 1_000_000)
}
