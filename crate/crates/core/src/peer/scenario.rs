use serde::{Deserialize, Serialize};

use super::node::{broadcast, spawn_network, sync_node, DeliveryReport, PeerNode};
use crate::ledger::{
    create_block, create_genesis, reseal, AuthorityKeys, AuthoritySet, BlockContent, ChainState,
    LedgerError,
};

/// Seed of the authority key used by scripted scenarios, so traces are reproducible.
pub const DEFAULT_AUTHORITY_SEED: [u8; 32] = [42u8; 32];
const FORGER_SEED: [u8; 32] = [13u8; 32];
const AUTHORITY_ID: &str = "authority";
/// Broadcasts are announced from this sender id.
const AUTHORITY_NODE: &str = "authority";
const DEFAULT_NODES: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed scenario script: {0}")]
    Parse(String),
    #[error("event at t={t}: node {node} does not exist")]
    UnknownNode { t: i64, node: usize },
    #[error("event at t={t} comes before t={previous}")]
    OutOfOrder { t: i64, previous: i64 },
    #[error("event at t={t}: {source}")]
    BadBlock { t: i64, source: LedgerError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Action {
    /// The authority creates, signs and announces the next block.
    Broadcast {
        network_id: String,
        bl: f64,
        date: String,
    },
    /// Announces a block signed by a key outside the authority set.
    BroadcastForged {
        network_id: String,
        bl: f64,
        date: String,
    },
    SetOffline { node: usize },
    SetOnline { node: usize },
    /// One sync round for `node`, or for every online node in order when absent.
    Sync {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<usize>,
    },
}

impl Action {
    fn name(&self) -> &'static str {
        match self {
            Action::Broadcast { .. } => "broadcast",
            Action::BroadcastForged { .. } => "broadcast_forged",
            Action::SetOffline { .. } => "set_offline",
            Action::SetOnline { .. } => "set_online",
            Action::Sync { .. } => "sync",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub t: i64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    pub events: Vec<ScriptEvent>,
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Events(Vec<ScriptEvent>),
    Full(Scenario),
}

impl Scenario {
    /// Accepts either a bare event list (five nodes) or `{"nodes": n, "events": [...]}`.
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        // parse to Value first so a bad event reports its own error instead of the
        // untagged enum's generic one
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let parsed = match value {
            serde_json::Value::Array(_) => serde_json::from_value::<Vec<ScriptEvent>>(value)
                .map(ScriptFile::Events),
            other => serde_json::from_value::<Scenario>(other).map(ScriptFile::Full),
        }
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Ok(match parsed {
            ScriptFile::Events(events) => Scenario {
                nodes: DEFAULT_NODES,
                events,
            },
            ScriptFile::Full(s) => s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub node_id: String,
    pub online: bool,
    pub length: usize,
    pub head_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: i64,
    pub event: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery: Option<DeliveryReport>,
    pub nodes: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub snapshots: Vec<Snapshot>,
    /// Every online node ends with the same head hash.
    pub converged: bool,
    /// Offline nodes whose head differs from the authority's chain.
    pub divergent_offline: Vec<String>,
}

/// A peer network plus the authority that feeds it blocks.
#[derive(Debug, Clone)]
pub struct Network {
    keys: AuthorityKeys,
    forger: AuthorityKeys,
    authorities: AuthoritySet,
    ledger: ChainState,
    nodes: Vec<PeerNode>,
    last_t: i64,
}

impl Network {
    pub fn new(n: usize, keys: AuthorityKeys) -> Network {
        let authorities = keys.authority_set();
        let genesis = create_genesis(&keys, 0);
        let ledger = ChainState::from_blocks_unchecked(vec![genesis.clone()]);
        Network {
            forger: AuthorityKeys::from_seed(keys.key_id(), FORGER_SEED),
            nodes: spawn_network(n, authorities.clone(), genesis),
            keys,
            authorities,
            ledger,
            last_t: i64::MIN,
        }
    }

    pub fn with_default_authority(n: usize) -> Network {
        Network::new(n, AuthorityKeys::from_seed(AUTHORITY_ID, DEFAULT_AUTHORITY_SEED))
    }

    pub fn nodes(&self) -> &[PeerNode] {
        &self.nodes
    }

    pub fn authorities(&self) -> &AuthoritySet {
        &self.authorities
    }

    /// The authority's own chain: every block it has produced.
    pub fn ledger(&self) -> &ChainState {
        &self.ledger
    }

    fn node_index(&self, t: i64, node: usize) -> Result<usize, ScenarioError> {
        if node < self.nodes.len() {
            Ok(node)
        } else {
            Err(ScenarioError::UnknownNode { t, node })
        }
    }

    pub fn view(&self) -> Vec<NodeView> {
        self.nodes
            .iter()
            .map(|n| NodeView {
                node_id: n.node_id.clone(),
                online: n.online,
                length: n.replica().len(),
                head_hash: n.replica().head_hash().to_string(),
            })
            .collect()
    }

    pub fn converged(&self) -> bool {
        let mut online = self.nodes.iter().filter(|n| n.online);
        match online.next() {
            None => true,
            Some(first) => online.all(|n| n.replica().head_hash() == first.replica().head_hash()),
        }
    }

    pub fn divergent_offline(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| !n.online && n.replica().head_hash() != self.ledger.head_hash())
            .map(|n| n.node_id.clone())
            .collect()
    }

    fn announce(
        &mut self,
        t: i64,
        network_id: &str,
        bl: f64,
        date: &str,
        forged: bool,
    ) -> Result<DeliveryReport, ScenarioError> {
        let content = BlockContent {
            network_id: network_id.to_string(),
            predicted_battery_life: bl,
            date_of_prediction: date.to_string(),
        };
        let mut block = create_block(&content, &self.ledger, &self.keys, &self.authorities, t)
            .map_err(|source| ScenarioError::BadBlock { t, source })?;
        if forged {
            reseal(&mut block, &self.forger);
        }
        let report = broadcast(&mut self.nodes, AUTHORITY_NODE, &block);
        if !forged {
            // the authority keeps every block it signs, whoever was listening
            let mut blocks = self.ledger.blocks().to_vec();
            blocks.push(block);
            self.ledger = ChainState::from_blocks_unchecked(blocks);
        }
        Ok(report)
    }

    /// Applies one event and returns the snapshot taken right after it.
    pub fn apply(&mut self, event: &ScriptEvent) -> Result<Snapshot, ScenarioError> {
        let t = event.t;
        if t < self.last_t {
            return Err(ScenarioError::OutOfOrder {
                t,
                previous: self.last_t,
            });
        }
        self.last_t = t;
        let delivery = match &event.action {
            Action::Broadcast { network_id, bl, date } => {
                Some(self.announce(t, network_id, *bl, date, false)?)
            }
            Action::BroadcastForged { network_id, bl, date } => {
                Some(self.announce(t, network_id, *bl, date, true)?)
            }
            Action::SetOffline { node } => {
                let i = self.node_index(t, *node)?;
                self.nodes[i].online = false;
                None
            }
            Action::SetOnline { node } => {
                let i = self.node_index(t, *node)?;
                self.nodes[i].online = true;
                None
            }
            Action::Sync { node: Some(node) } => {
                let i = self.node_index(t, *node)?;
                sync_node(&mut self.nodes, i);
                None
            }
            Action::Sync { node: None } => {
                for i in 0..self.nodes.len() {
                    sync_node(&mut self.nodes, i);
                }
                None
            }
        };
        Ok(Snapshot {
            t,
            event: event.action.name().to_string(),
            delivery,
            nodes: self.view(),
        })
    }
}

/// Runs the script against a fresh network. The first snapshot is the initial state.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioTrace, ScenarioError> {
    let mut net = Network::with_default_authority(scenario.nodes);
    let mut snapshots = vec![Snapshot {
        t: 0,
        event: "init".to_string(),
        delivery: None,
        nodes: net.view(),
    }];
    for event in &scenario.events {
        snapshots.push(net.apply(event)?);
    }
    Ok(ScenarioTrace {
        snapshots,
        converged: net.converged(),
        divergent_offline: net.divergent_offline(),
    })
}
