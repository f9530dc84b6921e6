//! In-process simulation of the peer network that replicates the ledger.
//!
//! Nodes exchange [`PeerMessage`]s only; a single-threaded scheduler delivers
//! them in script order, so every run is reproducible.

mod node;
mod scenario;

pub use node::{
    broadcast, resolve, spawn_network, spawn_network_from, sync_node, Delivery, DeliveryReport,
    NodeResponse, PeerMessage, PeerNode, RejectReason,
};
pub use scenario::{
    run_scenario, Action, Network, NodeView, Scenario, ScenarioError, ScenarioTrace, ScriptEvent,
    Snapshot, DEFAULT_AUTHORITY_SEED,
};
