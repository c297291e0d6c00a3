//! Coordination-free partition merging: every node at a boundary adopts the
//! minimum partition id it can see.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::{NodeState, PartitionId};
use crate::nodeset::NodeSet;
use crate::ring::NodeId;
use crate::view::PeerView;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub node: NodeId,
    pub from: PartitionId,
    pub to: PartitionId,
    pub round: u64,
}

/// One merger evaluation for `node`.
///
/// Cross-partition links that are no longer reachable, or whose target now
/// shares the node's partition, are dropped afterwards.
pub fn merger_step(node: &mut NodeState, view: &PeerView, round: u64) -> Option<MergeDecision> {
    if node.cross_partition_links.is_empty() {
        return None;
    }
    let mut seen: BTreeSet<PartitionId> = [node.partition_id].into_iter().collect();
    for &j in &node.cross_partition_links {
        if view.reachable(node.id, j) {
            if let Some(p) = view.partition_of(j) {
                seen.insert(p);
            }
        }
    }
    let target = *seen.first().expect("contains own partition");
    node.known_partitions = seen;

    let from = node.partition_id;
    let decision = node.assign_partition(target).then_some(MergeDecision {
        node: node.id,
        from,
        to: target,
        round,
    });

    let (id, p) = (node.id, node.partition_id);
    node.cross_partition_links
        .retain(|&j| view.reachable(id, j) && view.partition_of(j) != Some(p));
    decision
}

/// Labels each fragment with its smallest member.
pub fn assign_fragment_ids(fragments: &[Vec<NodeId>]) -> Result<BTreeMap<NodeId, PartitionId>> {
    let mut out = BTreeMap::new();
    for (i, frag) in fragments.iter().enumerate() {
        let min = frag
            .iter()
            .min()
            .ok_or_else(|| Error::invalid(format!("fragment {i} is empty")))?;
        for &id in frag {
            if out.insert(id, PartitionId(min.0)).is_some() {
                return Err(Error::invalid(format!(
                    "node {id} appears in more than one fragment"
                )));
            }
        }
    }
    Ok(out)
}

/// Per connected component (keyed by its smallest member): do all members
/// agree on one partition id and know every other member?
pub fn partitions_converged(
    states: &BTreeMap<NodeId, NodeState>,
    components: &[NodeSet],
) -> BTreeMap<NodeId, bool> {
    components
        .iter()
        .filter_map(|c| Some((c.min()?, component_converged(states, c))))
        .collect()
}

pub fn component_converged(states: &BTreeMap<NodeId, NodeState>, component: &NodeSet) -> bool {
    let mut partition = None;
    for id in component.iter() {
        let Some(s) = states.get(&id) else {
            return false;
        };
        if *partition.get_or_insert(s.partition_id) != s.partition_id {
            return false;
        }
        if !component.is_subset(&s.known_nodes) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::RingConfig;
    use crate::view::PeerInfo;

    fn ids(r: std::ops::RangeInclusive<u64>) -> Vec<NodeId> {
        r.map(NodeId).collect()
    }

    fn labelled(parts: &[(u64, u64)]) -> PeerView {
        PeerView::new(parts.iter().map(|&(id, p)| {
            (
                NodeId(id),
                PeerInfo {
                    active: true,
                    segment: 0,
                    partition: PartitionId(p),
                },
            )
        }))
    }

    fn node(id: u64, p: u64) -> NodeState {
        let all = ids(0..=15);
        let mut s =
            NodeState::build_initial(NodeId(id), &all, &RingConfig::new(4, 0).unwrap()).unwrap();
        s.partition_id = PartitionId(p);
        s
    }

    #[test]
    fn adopts_minimum_of_known_partitions() {
        let view = labelled(&[(0, 3), (1, 1), (2, 2), (3, 3)]);
        let mut n = node(0, 3);
        n.cross_partition_links = [1, 2].into_iter().map(NodeId).collect();
        let d = merger_step(&mut n, &view, 9).unwrap();
        assert_eq!(
            d,
            MergeDecision {
                node: NodeId(0),
                from: PartitionId(3),
                to: PartitionId(1),
                round: 9
            }
        );
        assert_eq!(n.partition_id, PartitionId(1));
        assert_eq!(n.partition_version, 1);
        let kp: Vec<u64> = n.known_partitions.iter().map(|p| p.0).collect();
        assert_eq!(kp, vec![1, 2, 3]);
        // the link to 1 now shares our partition; the one to 2 still crosses
        assert_eq!(
            n.cross_partition_links
                .iter()
                .map(|x| x.0)
                .collect::<Vec<_>>(),
            vec![2]
        );
    }

    #[test]
    fn already_minimal_only_purges() {
        let view = labelled(&[(0, 0), (5, 0), (6, 6)]);
        let mut n = node(5, 0);
        n.cross_partition_links = [0, 6].into_iter().map(NodeId).collect();
        assert_eq!(merger_step(&mut n, &view, 1), None);
        assert_eq!(n.partition_version, 0);
        assert_eq!(
            n.cross_partition_links
                .iter()
                .map(|x| x.0)
                .collect::<Vec<_>>(),
            vec![6]
        );
        let again = n.clone();
        assert_eq!(merger_step(&mut n, &view, 2), None);
        assert_eq!(n, again);
    }

    #[test]
    fn unreachable_links_are_ignored_and_dropped() {
        let view = PeerView::new([
            (
                NodeId(4),
                PeerInfo {
                    active: true,
                    segment: 0,
                    partition: PartitionId(4),
                },
            ),
            (
                NodeId(1),
                PeerInfo {
                    active: false,
                    segment: 0,
                    partition: PartitionId(1),
                },
            ),
        ]);
        let mut n = node(4, 4);
        n.cross_partition_links.insert(NodeId(1));
        assert_eq!(merger_step(&mut n, &view, 0), None);
        assert!(n.cross_partition_links.is_empty());
    }

    #[test]
    fn no_links_no_work() {
        let view = labelled(&[(0, 0)]);
        let mut n = node(0, 0);
        let before = n.clone();
        assert_eq!(merger_step(&mut n, &view, 0), None);
        assert_eq!(n, before);
    }

    #[test]
    fn fragment_ids_are_minimum_members() {
        let two = assign_fragment_ids(&[ids(0..=5), ids(6..=15)]).unwrap();
        assert!(ids(0..=5).iter().all(|i| two[i] == PartitionId(0)));
        assert!(ids(6..=15).iter().all(|i| two[i] == PartitionId(6)));

        let three = assign_fragment_ids(&[ids(0..=4), ids(5..=9), ids(10..=15)]).unwrap();
        let distinct: BTreeSet<_> = three.values().copied().collect();
        assert_eq!(
            distinct.into_iter().map(|p| p.0).collect::<Vec<_>>(),
            vec![0, 5, 10]
        );

        let one = assign_fragment_ids(&[ids(0..=15)]).unwrap();
        assert!(one.values().all(|p| *p == PartitionId(0)));

        assert!(assign_fragment_ids(&[ids(0..=5), ids(5..=9)]).is_err());
        assert!(assign_fragment_ids(&[vec![]]).is_err());
    }

    #[test]
    fn convergence_needs_agreement_and_full_knowledge() {
        let all = ids(0..=3);
        let cfg = RingConfig::new(2, 0).unwrap();
        let mut states: BTreeMap<NodeId, NodeState> = all
            .iter()
            .map(|&i| (i, NodeState::build_initial(i, &all, &cfg).unwrap()))
            .collect();
        let comp: NodeSet = all.iter().copied().collect();
        // 4-node ring: every node's fingers and neighbours already cover it
        assert!(component_converged(&states, &comp));
        states.get_mut(&NodeId(2)).unwrap().partition_id = PartitionId(2);
        assert!(!component_converged(&states, &comp));
        states.get_mut(&NodeId(2)).unwrap().partition_id = PartitionId(0);
        states
            .get_mut(&NodeId(3))
            .unwrap()
            .known_nodes
            .remove(NodeId(1));
        let flags = partitions_converged(&states, &[comp]);
        assert_eq!(flags.get(&NodeId(0)), Some(&false));
    }
}
