//! Structured gossip: target selection, message snapshots, cross-partition
//! detection and message receipt.

use serde::{Deserialize, Serialize};

use crate::node::{NodeState, PartitionId};
use crate::nodeset::NodeSet;
use crate::ring::{clockwise_distance, NodeId, RingConfig};
use crate::version::VersionVector;
use crate::view::PeerView;

/// Snapshot of a sender's membership knowledge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GossipMessage {
    pub sender: NodeId,
    pub known_nodes: NodeSet,
    pub vv: VersionVector,
    pub partition_id: PartitionId,
    pub partition_version: u64,
}

impl GossipMessage {
    /// Canonical single-line JSON form used in event logs.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("gossip message serializes")
    }
}

/// Which finger a node gossips to besides its successor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerSelection {
    /// Always the finger furthest clockwise. Reaches only two fixed offsets,
    /// so knowledge crosses the ring in Θ(n) rounds.
    Furthest,
    /// Cycle through the distinct fingers, furthest first, one per round.
    /// Round 0 matches `Furthest`.
    #[default]
    Rotating,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GossipTargets {
    pub successor: Option<NodeId>,
    pub finger: Option<NodeId>,
}

impl GossipTargets {
    /// Distinct targets; a finger equal to the successor is sent one message.
    pub fn distinct(&self) -> impl Iterator<Item = NodeId> {
        let finger = self.finger.filter(|f| Some(*f) != self.successor);
        self.successor.into_iter().chain(finger)
    }

    pub fn len(&self) -> usize {
        self.distinct().count()
    }

    pub fn is_empty(&self) -> bool {
        self.successor.is_none() && self.finger.is_none()
    }
}

pub fn select_targets(
    node: &NodeState,
    view: &PeerView,
    cfg: &RingConfig,
    policy: FingerSelection,
    round: u64,
) -> GossipTargets {
    let same_part = |j: NodeId| j != node.id && view.same_partition(node.id, node.partition_id, j);

    let successor = Some(node.successor).filter(|&s| same_part(s));

    let mut fingers: Vec<NodeId> = node.finger_targets().filter(|&f| same_part(f)).collect();
    // furthest first; ties (same distance means same node) fall to the lower id
    fingers.sort_by_key(|&f| (std::cmp::Reverse(clockwise_distance(node.id, f, cfg)), f));
    fingers.dedup();

    let finger = match policy {
        FingerSelection::Furthest => fingers.first().copied(),
        FingerSelection::Rotating if fingers.is_empty() => None,
        FingerSelection::Rotating => Some(fingers[(round % fingers.len() as u64) as usize]),
    };
    GossipTargets { successor, finger }
}

pub fn make_message(node: &NodeState) -> GossipMessage {
    GossipMessage {
        sender: node.id,
        known_nodes: node.known_nodes.clone(),
        vv: node.vv.clone(),
        partition_id: node.partition_id,
        partition_version: node.partition_version,
    }
}

/// Records every live structure link that points into another partition.
/// Returns the number of links newly added.
pub fn detect_cross_partition(node: &mut NodeState, view: &PeerView) -> usize {
    let mut added = 0;
    for k in node.structure_links() {
        if k == node.id || !view.reachable(node.id, k) {
            continue;
        }
        let Some(pk) = view.partition_of(k) else {
            continue;
        };
        if pk != node.partition_id {
            if node.cross_partition_links.insert(k) {
                added += 1;
            }
            node.known_partitions.insert(pk);
        }
    }
    added
}

/// Applies a delivered gossip message.
///
/// Same-partition messages contribute every node the oracle places in the
/// receiver's partition, and their version vector is max-merged.
/// A message from another partition only records the sender as a
/// cross-partition link.
pub fn receive_gossip(node: &mut NodeState, msg: &GossipMessage, view: &PeerView, round: u64) {
    if msg.partition_id == node.partition_id {
        let fresh = &msg.known_nodes - &node.known_nodes;
        if !fresh.is_empty() {
            let admitted = &fresh & view.partition_members(node.partition_id);
            node.known_nodes.union_with(&admitted);
        }
        node.vv.merge(&msg.vv);
    } else {
        node.cross_partition_links.insert(msg.sender);
        node.known_partitions.insert(msg.partition_id);
    }
    node.last_update = round;
}
