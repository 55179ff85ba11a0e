//! Discrete-event simulation of AODV routing in small ad-hoc networks,
//! with an optional integrity extension that authenticates every routing
//! message with a keyed message digest.
//!
//! The crate is organized around the protocol stack:
//!
//! - [`wire`]: control-message types and their byte-exact encoding,
//!   including the trailing hash-function / digest extension.
//! - [`digest`]: MD5 and SHA-1, the hash-function registry, and the
//!   sign / verify / re-sign pipeline applied to routing messages.
//! - [`node`]: the per-node AODV engine (route discovery, routing table,
//!   HELLO liveness, error propagation) plus verification, detection and
//!   blacklisting in secured mode.
//! - [`adversary`]: malicious-node policies (tampering, dropping,
//!   fabrication, spoofing) applied around an otherwise standard node.
//! - [`sim`]: the deterministic event loop, radio delivery, traffic
//!   flows, energy accounting and per-node packet counters.
//! - [`scenario`] / [`report`]: scenario-file loading and run reports.
//!
//! Runs are reproducible: the same scenario and seed produce byte-identical
//! traces and reports.

pub mod adversary;
pub mod digest;
pub mod metrics;
pub mod node;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod wire;

pub use scenario::{load_scenario, Scenario};
pub use sim::{run, run_with_options, RunOptions, RunOutput};
