//! Fault model: which nodes are up and which network segment each sits in.
//!
//! Segments are labelled with the fragment id assigned at split time, so a
//! heal names the segments it reconnects by those same ids.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::merger::assign_fragment_ids;
use crate::node::PartitionId;
use crate::nodeset::NodeSet;
use crate::ring::NodeId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    segment: BTreeMap<NodeId, u64>,
    down: BTreeSet<NodeId>,
}

/// Which segments a heal reconnects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HealTarget {
    All,
    Segments(Vec<u64>),
}

impl Topology {
    /// Everyone up, one segment labelled 0.
    pub fn connected(ids: &[NodeId]) -> Self {
        Topology {
            segment: ids.iter().map(|&id| (id, 0)).collect(),
            down: BTreeSet::new(),
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.segment.contains_key(&id)
    }

    pub fn is_active(&self, id: NodeId) -> bool {
        self.contains(id) && !self.down.contains(&id)
    }

    pub fn segment_of(&self, id: NodeId) -> Option<u64> {
        self.segment.get(&id).copied()
    }

    pub fn labels(&self) -> BTreeSet<u64> {
        self.segment.values().copied().collect()
    }

    /// Replaces the segmentation with `fragments`. Fragments must be
    /// disjoint, non-empty, name existing nodes and cover every live node.
    /// Down nodes left out get a segment of their own.
    ///
    /// Returns the partition id of every listed node.
    pub fn split(&mut self, fragments: &[Vec<NodeId>]) -> Result<BTreeMap<NodeId, PartitionId>> {
        let ids = assign_fragment_ids(fragments)?;
        if let Some(bad) = ids.keys().find(|id| !self.contains(**id)) {
            return Err(Error::invalid(format!("fragment names unknown node {bad}")));
        }
        if let Some(missing) = self
            .segment
            .keys()
            .find(|id| self.is_active(**id) && !ids.contains_key(id))
        {
            return Err(Error::invalid(format!(
                "live node {missing} is not covered by any fragment"
            )));
        }
        for (id, seg) in self.segment.iter_mut() {
            *seg = ids.get(id).map_or(id.0, |p| p.0);
        }
        Ok(ids)
    }

    /// Reconnects segments. The merged segment takes the smallest label.
    pub fn heal(&mut self, target: &HealTarget) -> Result<u64> {
        let labels = self.labels();
        let chosen: BTreeSet<u64> = match target {
            HealTarget::All => labels,
            HealTarget::Segments(s) => {
                if s.is_empty() {
                    return Err(Error::invalid("heal needs at least one partition id"));
                }
                if let Some(bad) = s.iter().find(|l| !labels.contains(l)) {
                    return Err(Error::invalid(format!("no partition {bad} to heal")));
                }
                s.iter().copied().collect()
            }
        };
        let merged = *chosen.first().expect("labels are never empty");
        for seg in self.segment.values_mut() {
            if chosen.contains(seg) {
                *seg = merged;
            }
        }
        Ok(merged)
    }

    pub fn kill(&mut self, id: NodeId) -> Result<()> {
        if !self.contains(id) {
            return Err(Error::invalid(format!("unknown node {id}")));
        }
        if !self.down.insert(id) {
            return Err(Error::invalid(format!("node {id} is already down")));
        }
        Ok(())
    }

    pub fn revive(&mut self, id: NodeId) -> Result<()> {
        if !self.contains(id) {
            return Err(Error::invalid(format!("unknown node {id}")));
        }
        if !self.down.remove(&id) {
            return Err(Error::invalid(format!("node {id} is not down")));
        }
        Ok(())
    }

    pub fn live_count(&self) -> usize {
        self.segment.len() - self.down.len()
    }

    /// Live nodes grouped by segment, ordered by smallest member.
    pub fn components(&self) -> Vec<NodeSet> {
        let mut by_seg: BTreeMap<u64, NodeSet> = BTreeMap::new();
        for (&id, &seg) in &self.segment {
            if !self.down.contains(&id) {
                by_seg.entry(seg).or_default().insert(id);
            }
        }
        let mut out: Vec<NodeSet> = by_seg.into_values().collect();
        out.sort_by_key(|c| c.min());
        out
    }
}
