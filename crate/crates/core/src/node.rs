//! Per-node protocol state and the local structural operations over it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dns::DnsRecord;
use crate::error::{Error, Result};
use crate::nodeset::NodeSet;
use crate::ring::{NodeId, RingConfig};
use crate::version::VersionVector;
use crate::view::PeerView;

/// Label of a partition. Merging adopts the minimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionId(pub u64);

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerEntry {
    pub k: u32,
    pub start: NodeId,
    /// `None` marks the entry INVALID; such entries are never routed or
    /// gossiped over.
    pub target: Option<NodeId>,
}

/// Outcome of a stabilization pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stabilization {
    Linked,
    /// No other reachable node is known; the node is a ring of one.
    Isolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeState {
    pub id: NodeId,
    pub successor: NodeId,
    pub predecessor: Option<NodeId>,
    pub fingers: Vec<FingerEntry>,
    pub vv: VersionVector,
    pub known_nodes: NodeSet,
    pub partition_id: PartitionId,
    pub partition_version: u64,
    pub known_partitions: BTreeSet<PartitionId>,
    pub cross_partition_links: BTreeSet<NodeId>,
    pub last_update: u64,
    pub dns_records: BTreeMap<String, DnsRecord>,
    pub active: bool,
}

/// First member clockwise from `key`, inclusive.
pub fn responsible_node(key: NodeId, members: &NodeSet) -> Result<NodeId> {
    members
        .first_from(key)
        .ok_or_else(|| Error::invalid("responsible_node needs at least one member"))
}

impl NodeState {
    /// State of `id` in a fresh, fully connected ring of `all_nodes`.
    ///
    /// `all_nodes` must be sorted ascending and contain `id`.
    pub fn build_initial(id: NodeId, all_nodes: &[NodeId], cfg: &RingConfig) -> Result<NodeState> {
        let pos = all_nodes
            .binary_search(&id)
            .map_err(|_| Error::invalid(format!("node {id} is not a member of the network")))?;
        let n = all_nodes.len();
        let successor = all_nodes[(pos + 1) % n];
        let predecessor = all_nodes[(pos + n - 1) % n];
        let members: NodeSet = all_nodes.iter().copied().collect();

        let fingers: Vec<FingerEntry> = (0..cfg.m)
            .map(|k| {
                let start = cfg.finger_start(id, k);
                FingerEntry {
                    k,
                    start,
                    target: members.first_from(start),
                }
            })
            .collect();

        let mut known_nodes: NodeSet = [id, successor, predecessor].into_iter().collect();
        known_nodes.extend(fingers.iter().filter_map(|f| f.target));

        let partition_id = PartitionId(0);
        Ok(NodeState {
            id,
            successor,
            predecessor: Some(predecessor),
            fingers,
            vv: VersionVector::new(),
            known_nodes,
            partition_id,
            partition_version: 0,
            known_partitions: [partition_id].into_iter().collect(),
            cross_partition_links: BTreeSet::new(),
            last_update: 0,
            dns_records: BTreeMap::new(),
            active: true,
        })
    }

    /// Known nodes this node can currently reach, itself included.
    fn candidates(&self, view: &PeerView) -> NodeSet {
        let mut c = &self.known_nodes & view.reachable_from(self.id);
        c.insert(self.id);
        c
    }

    /// Passive successor/predecessor repair.
    ///
    /// Both pointers move to the nearest known reachable node in their
    /// direction. Nothing is probed and nothing is awaited.
    pub fn stabilize(&mut self, view: &PeerView) -> Stabilization {
        let candidates = self.candidates(view);
        match candidates.next_after(self.id) {
            Some(succ) => {
                self.successor = succ;
                self.predecessor = candidates.prev_before(self.id);
                Stabilization::Linked
            }
            None => {
                self.successor = self.id;
                self.predecessor = Some(self.id);
                Stabilization::Isolated
            }
        }
    }

    /// Re-points every finger at the nearest known reachable node clockwise
    /// from its start. The node itself is always a candidate, so a node alone
    /// in its segment ends up with every finger pointing at itself.
    pub fn repair_fingers(&mut self, view: &PeerView) {
        let candidates = self.candidates(view);
        for f in &mut self.fingers {
            f.target = candidates.first_from(f.start);
        }
    }

    /// Marks fingers whose target is no longer reachable as INVALID.
    pub fn invalidate_unreachable(&mut self, view: &PeerView) {
        for f in &mut self.fingers {
            if let Some(t) = f.target {
                if t != self.id && !view.reachable(self.id, t) {
                    f.target = None;
                }
            }
        }
    }

    /// Valid finger targets, in finger order.
    pub fn finger_targets(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.fingers.iter().filter_map(|f| f.target)
    }

    /// Fingers plus successor and predecessor, deduplicated.
    pub fn structure_links(&self) -> BTreeSet<NodeId> {
        let mut links: BTreeSet<NodeId> = self.finger_targets().collect();
        links.insert(self.successor);
        if let Some(p) = self.predecessor {
            links.insert(p);
        }
        links
    }

    /// Moves the node into `partition`, bumping `partition_version` when the
    /// label actually changes.
    pub fn assign_partition(&mut self, partition: PartitionId) -> bool {
        if self.partition_id == partition {
            return false;
        }
        self.partition_id = partition;
        self.partition_version += 1;
        self.known_partitions.insert(partition);
        true
    }
}
