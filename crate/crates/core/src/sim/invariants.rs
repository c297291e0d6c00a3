//! Per-round checks of the four protocol invariants.
//!
//! I1 and I4 hold every round. I2 and I3 describe a settled component, so
//! they are only evaluated for components that have converged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::merger::component_converged;
use crate::node::{NodeState, PartitionId};
use crate::nodeset::NodeSet;
use crate::ring::NodeId;
use crate::version::VersionVector;
use crate::view::PeerView;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Invariant {
    /// Version vector entries never decrease.
    I1,
    /// A settled component carries the minimum partition id present when
    /// its topology last changed.
    I2,
    /// A settled component's successor pointers form one cycle over it.
    I3,
    /// Fingers point at reachable nodes, in the owner's partition unless a
    /// merge is still in flight, or are INVALID.
    I4,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub node: NodeId,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub peer: Option<NodeId>,
    pub detail: String,
}

/// State carried between rounds for the checks.
#[derive(Clone, Debug, Default)]
pub struct History {
    /// Version vectors at the end of the previous round.
    pub prev_vv: BTreeMap<NodeId, VersionVector>,
    /// Expected settled partition per component, keyed by smallest member.
    pub floors: BTreeMap<NodeId, PartitionId>,
}

impl History {
    pub fn snapshot_vv(states: &BTreeMap<NodeId, NodeState>) -> BTreeMap<NodeId, VersionVector> {
        states.iter().map(|(&id, s)| (id, s.vv.clone())).collect()
    }

    /// Minimum partition id inside each component.
    pub fn floors_of(
        states: &BTreeMap<NodeId, NodeState>,
        components: &[NodeSet],
    ) -> BTreeMap<NodeId, PartitionId> {
        components
            .iter()
            .filter_map(|c| {
                let key = c.min()?;
                let floor = c
                    .iter()
                    .filter_map(|id| states.get(&id))
                    .map(|s| s.partition_id)
                    .min()?;
                Some((key, floor))
            })
            .collect()
    }
}

pub fn check_invariants(
    states: &BTreeMap<NodeId, NodeState>,
    view: &PeerView,
    components: &[NodeSet],
    history: &History,
) -> Vec<Violation> {
    let mut out = Vec::new();
    check_vv_monotone(states, history, &mut out);
    for c in components {
        let Some(key) = c.min() else { continue };
        let partitions: BTreeSet<PartitionId> = c
            .iter()
            .filter_map(|id| states.get(&id))
            .map(|s| s.partition_id)
            .collect();
        check_fingers(states, view, c, partitions.len() > 1, &mut out);
        if !component_converged(states, c) {
            continue;
        }
        let settled = *partitions.first().expect("component is non-empty");
        if let Some(&floor) = history.floors.get(&key) {
            if settled != floor {
                out.push(Violation {
                    invariant: Invariant::I2,
                    node: key,
                    peer: None,
                    detail: format!("component settled on {settled}, minimum present was {floor}"),
                });
            }
        }
        check_single_cycle(states, c, &mut out);
    }
    out
}

fn check_vv_monotone(
    states: &BTreeMap<NodeId, NodeState>,
    history: &History,
    out: &mut Vec<Violation>,
) {
    for (id, prev) in &history.prev_vv {
        let Some(s) = states.get(id) else { continue };
        for (peer, was) in prev.iter() {
            let now = s.vv.get(peer);
            if now < was {
                out.push(Violation {
                    invariant: Invariant::I1,
                    node: *id,
                    peer: Some(peer),
                    detail: format!("vv entry fell from {was} to {now}"),
                });
            }
        }
    }
}

fn check_fingers(
    states: &BTreeMap<NodeId, NodeState>,
    view: &PeerView,
    component: &NodeSet,
    merging: bool,
    out: &mut Vec<Violation>,
) {
    for id in component.iter() {
        let Some(s) = states.get(&id) else { continue };
        for f in &s.fingers {
            let Some(t) = f.target else { continue };
            if t == id {
                continue;
            }
            if !view.reachable(id, t) {
                out.push(Violation {
                    invariant: Invariant::I4,
                    node: id,
                    peer: Some(t),
                    detail: format!("finger {} targets unreachable node", f.k),
                });
            } else if !merging && view.partition_of(t) != Some(s.partition_id) {
                out.push(Violation {
                    invariant: Invariant::I4,
                    node: id,
                    peer: Some(t),
                    detail: format!("finger {} crosses into another partition", f.k),
                });
            }
        }
    }
}

fn check_single_cycle(
    states: &BTreeMap<NodeId, NodeState>,
    component: &NodeSet,
    out: &mut Vec<Violation>,
) {
    let start = component.min().expect("component is non-empty");
    let mut seen = NodeSet::new();
    let mut cur = start;
    for _ in 0..component.len() {
        if !component.contains(cur) || !seen.insert(cur) {
            out.push(Violation {
                invariant: Invariant::I3,
                node: start,
                peer: Some(cur),
                detail: format!("successor walk revisits or leaves the component at {cur}"),
            });
            return;
        }
        cur = states[&cur].successor;
    }
    if cur != start {
        out.push(Violation {
            invariant: Invariant::I3,
            node: start,
            peer: Some(cur),
            detail: format!(
                "successor walk of {} steps ended at {cur}, not back at {start}",
                component.len()
            ),
        });
    }
}
