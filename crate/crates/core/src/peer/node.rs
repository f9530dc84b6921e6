use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ledger::{append, validate_block, validate_chain, AuthoritySet, ChainState, PredictionBlock};

#[derive(Debug, Clone)]
pub struct PeerNode {
    pub node_id: String,
    pub online: bool,
    replica: ChainState,
    authorities: Arc<AuthoritySet>,
}

impl PeerNode {
    pub fn replica(&self) -> &ChainState {
        &self.replica
    }

    pub fn authorities(&self) -> &AuthoritySet {
        &self.authorities
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeerMessage {
    BlockAnnounce { from: String, block: PredictionBlock },
    ChainRequest { from: String },
    ChainResponse { from: String, chain: ChainState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum RejectReason {
    /// The block is already in the replica.
    AlreadyHave,
    /// The block is ahead of the local head; the node must fetch the chain.
    NeedsSync,
    /// A different block already occupies that index.
    Conflict,
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeResponse {
    Accept,
    Reject(RejectReason),
    /// Reply to a `ChainRequest`.
    Chain(ChainState),
    /// Outcome of resolving a received chain.
    Resolved { adopted: bool },
    Unreachable,
}

/// `n` online nodes, each holding a replica of the same genesis chain. The genesis
/// block is trusted as given.
pub fn spawn_network(n: usize, authorities: AuthoritySet, genesis: PredictionBlock) -> Vec<PeerNode> {
    let chain = ChainState::from_blocks_unchecked(vec![genesis]);
    spawn_network_from(n, authorities, &chain)
}

/// `n` online nodes seeded with an existing chain.
pub fn spawn_network_from(n: usize, authorities: AuthoritySet, chain: &ChainState) -> Vec<PeerNode> {
    let authorities = Arc::new(authorities);
    (0..n)
        .map(|i| PeerNode {
            node_id: format!("node-{i}"),
            online: true,
            replica: chain.clone(),
            authorities: Arc::clone(&authorities),
        })
        .collect()
}

fn same_genesis(a: &ChainState, b: &ChainState) -> bool {
    match (a.genesis(), b.genesis()) {
        (Some(x), Some(y)) => x.hash == y.hash,
        _ => false,
    }
}

/// Fork choice. The candidate replaces `local` only if it validates, shares the
/// genesis block, and is strictly longer; at equal length with differing heads the
/// lexicographically smaller head hash wins.
pub fn resolve(local: &ChainState, candidate: &ChainState, authorities: &AuthoritySet) -> ChainState {
    let better = candidate.len() > local.len()
        || (candidate.len() == local.len()
            && candidate.head_hash() != local.head_hash()
            && candidate.head_hash() < local.head_hash());
    if better && same_genesis(local, candidate) && validate_chain(candidate, authorities).is_ok() {
        candidate.clone()
    } else {
        local.clone()
    }
}

fn receive_block(node: &mut PeerNode, block: PredictionBlock) -> NodeResponse {
    let head_index = node.replica.head().map_or(0, |h| h.index);
    if block.index <= head_index {
        let existing = &node.replica.blocks()[block.index as usize];
        return NodeResponse::Reject(if existing.hash == block.hash {
            RejectReason::AlreadyHave
        } else {
            RejectReason::Conflict
        });
    }
    if block.index > head_index + 1 {
        return NodeResponse::Reject(RejectReason::NeedsSync);
    }
    if let Err(e) = validate_block(&block, node.replica.head(), &node.authorities) {
        return NodeResponse::Reject(RejectReason::Invalid(e.to_string()));
    }
    match append(&node.replica, block, &node.authorities) {
        Ok(next) => {
            node.replica = next;
            NodeResponse::Accept
        }
        Err(e) => NodeResponse::Reject(RejectReason::Invalid(e.to_string())),
    }
}

impl PeerNode {
    pub fn receive(&mut self, msg: PeerMessage) -> NodeResponse {
        if !self.online {
            return NodeResponse::Unreachable;
        }
        match msg {
            PeerMessage::BlockAnnounce { block, .. } => receive_block(self, block),
            PeerMessage::ChainRequest { .. } => NodeResponse::Chain(self.replica.clone()),
            PeerMessage::ChainResponse { chain, .. } => {
                let next = resolve(&self.replica, &chain, &self.authorities);
                let adopted = next.head_hash() != self.replica.head_hash();
                self.replica = next;
                NodeResponse::Resolved { adopted }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Delivery {
    Accepted,
    Rejected { reason: RejectReason },
    Unreachable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub accepted: usize,
    pub rejected: usize,
    pub unreachable: usize,
    pub per_node: Vec<(String, Delivery)>,
    /// Nodes that answered `NeedsSync` and then ran a sync round.
    #[serde(default)]
    pub resynced: Vec<String>,
}

impl DeliveryReport {
    pub fn unanimous(&self) -> bool {
        self.rejected == 0 && self.unreachable == 0
    }
}

/// Sends a `BlockAnnounce` to every node. Offline nodes lose the message. Nodes that
/// reply `NeedsSync` run one sync round once every node has seen the announcement.
pub fn broadcast(nodes: &mut [PeerNode], from: &str, block: &PredictionBlock) -> DeliveryReport {
    let mut report = DeliveryReport::default();
    let mut lagging = Vec::new();
    for (i, node) in nodes.iter_mut().enumerate() {
        let msg = PeerMessage::BlockAnnounce {
            from: from.to_string(),
            block: block.clone(),
        };
        let delivery = match node.receive(msg) {
            NodeResponse::Accept => {
                report.accepted += 1;
                Delivery::Accepted
            }
            NodeResponse::Unreachable => {
                report.unreachable += 1;
                Delivery::Unreachable
            }
            NodeResponse::Reject(reason) => {
                if reason == RejectReason::NeedsSync {
                    lagging.push(i);
                }
                report.rejected += 1;
                Delivery::Rejected { reason }
            }
            other => unreachable!("block announce answered with {other:?}"),
        };
        report.per_node.push((node.node_id.clone(), delivery));
    }
    for i in lagging {
        sync_node(nodes, i);
        report.resynced.push(nodes[i].node_id.clone());
    }
    report
}

/// One sync round for `nodes[idx]`: request every other online peer's chain and
/// resolve each reply in node order. Returns whether the replica changed.
pub fn sync_node(nodes: &mut [PeerNode], idx: usize) -> bool {
    if !nodes[idx].online {
        return false;
    }
    let requester = nodes[idx].node_id.clone();
    let before = nodes[idx].replica.head_hash().to_string();
    for j in 0..nodes.len() {
        if j == idx {
            continue;
        }
        let reply = nodes[j].receive(PeerMessage::ChainRequest {
            from: requester.clone(),
        });
        if let NodeResponse::Chain(chain) = reply {
            let from = nodes[j].node_id.clone();
            nodes[idx].receive(PeerMessage::ChainResponse { from, chain });
        }
    }
    nodes[idx].replica.head_hash() != before
}
