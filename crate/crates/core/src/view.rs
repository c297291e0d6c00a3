//! God-view oracle over the simulated network.
//!
//! The protocol reads peers' liveness, reachability and partition labels
//! directly, the way the pseudocode reads its global arrays. The harness
//! builds a `PeerView` from the fault model and the current node states.

use std::collections::BTreeMap;

use crate::node::PartitionId;
use crate::nodeset::NodeSet;
use crate::ring::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeerInfo {
    pub active: bool,
    /// Network segment. Two active nodes can talk iff their segments match.
    pub segment: u64,
    pub partition: PartitionId,
}

#[derive(Clone, Debug, Default)]
pub struct PeerView {
    peers: BTreeMap<NodeId, PeerInfo>,
    reachable: BTreeMap<u64, NodeSet>,
    by_partition: BTreeMap<PartitionId, NodeSet>,
    empty: NodeSet,
}

impl PeerView {
    pub fn new(peers: impl IntoIterator<Item = (NodeId, PeerInfo)>) -> Self {
        let peers: BTreeMap<_, _> = peers.into_iter().collect();
        let mut reachable: BTreeMap<u64, NodeSet> = BTreeMap::new();
        let mut by_partition: BTreeMap<PartitionId, NodeSet> = BTreeMap::new();
        for (&id, info) in &peers {
            if info.active {
                reachable.entry(info.segment).or_default().insert(id);
            }
            by_partition.entry(info.partition).or_default().insert(id);
        }
        PeerView {
            peers,
            reachable,
            by_partition,
            empty: NodeSet::new(),
        }
    }

    /// Every node in one segment, all active, all in partition 0.
    pub fn connected(ids: impl IntoIterator<Item = NodeId>) -> Self {
        Self::new(ids.into_iter().map(|id| {
            (
                id,
                PeerInfo {
                    active: true,
                    segment: 0,
                    partition: PartitionId(0),
                },
            )
        }))
    }

    pub fn exists(&self, id: NodeId) -> bool {
        self.peers.contains_key(&id)
    }

    pub fn info(&self, id: NodeId) -> Option<PeerInfo> {
        self.peers.get(&id).copied()
    }

    pub fn is_active(&self, id: NodeId) -> bool {
        self.peers.get(&id).is_some_and(|p| p.active)
    }

    pub fn partition_of(&self, id: NodeId) -> Option<PartitionId> {
        self.peers.get(&id).map(|p| p.partition)
    }

    /// Active nodes `from` can currently exchange messages with, itself
    /// included. Empty when `from` is down.
    pub fn reachable_from(&self, from: NodeId) -> &NodeSet {
        match self.peers.get(&from) {
            Some(p) if p.active => self.reachable.get(&p.segment).unwrap_or(&self.empty),
            _ => &self.empty,
        }
    }

    pub fn reachable(&self, from: NodeId, to: NodeId) -> bool {
        match (self.peers.get(&from), self.peers.get(&to)) {
            (Some(a), Some(b)) => a.active && b.active && a.segment == b.segment,
            _ => false,
        }
    }

    /// All existing nodes (up or down) currently labelled with `p`.
    pub fn partition_members(&self, p: PartitionId) -> &NodeSet {
        self.by_partition.get(&p).unwrap_or(&self.empty)
    }

    /// Active, reachable and labelled with `p`: the `samePart` set as seen
    /// from `from`.
    pub fn same_partition(&self, from: NodeId, p: PartitionId, target: NodeId) -> bool {
        self.reachable(from, target) && self.partition_of(target) == Some(p)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.peers.keys().copied()
    }
}
