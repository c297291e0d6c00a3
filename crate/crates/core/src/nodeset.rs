use std::fmt;
use std::ops::{BitAnd, BitOr, Sub};

use roaring::RoaringTreemap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ring::NodeId;

/// An ordered set of node identifiers.
///
/// Serializes as a sorted JSON array.
#[derive(Clone, Default, PartialEq)]
pub struct NodeSet(RoaringTreemap);

impl NodeSet {
    pub fn new() -> Self {
        NodeSet(RoaringTreemap::new())
    }

    pub fn insert(&mut self, id: NodeId) -> bool {
        self.0.insert(id.0)
    }

    pub fn remove(&mut self, id: NodeId) -> bool {
        self.0.remove(id.0)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0.contains(id.0)
    }

    pub fn len(&self) -> usize {
        self.0.len() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = NodeId> + '_ {
        self.0.iter().map(NodeId)
    }

    pub fn min(&self) -> Option<NodeId> {
        self.0.min().map(NodeId)
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        self.0 |= &other.0;
    }

    /// First member at or clockwise after `from`, wrapping past the top of
    /// the ring.
    pub fn first_from(&self, from: NodeId) -> Option<NodeId> {
        let below = if from.0 == 0 {
            0
        } else {
            self.0.rank(from.0 - 1)
        };
        self.0.select(below).or_else(|| self.0.min()).map(NodeId)
    }

    /// First member at or counter-clockwise before `from`, wrapping past zero.
    pub fn last_upto(&self, from: NodeId) -> Option<NodeId> {
        let upto = self.0.rank(from.0);
        if upto == 0 {
            self.0.max().map(NodeId)
        } else {
            self.0.select(upto - 1).map(NodeId)
        }
    }

    /// First member clockwise strictly after `from`, excluding `from` itself
    /// even after wrapping all the way around.
    pub fn next_after(&self, from: NodeId) -> Option<NodeId> {
        let upto = self.0.rank(from.0);
        let found = self.0.select(upto).or_else(|| self.0.min())?;
        (found != from.0).then_some(NodeId(found))
    }

    /// First member counter-clockwise strictly before `from`.
    pub fn prev_before(&self, from: NodeId) -> Option<NodeId> {
        let below = if from.0 == 0 {
            0
        } else {
            self.0.rank(from.0 - 1)
        };
        let found = if below == 0 {
            self.0.max()?
        } else {
            self.0.select(below - 1)?
        };
        (found != from.0).then_some(NodeId(found))
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut s = NodeSet::new();
        s.extend(iter);
        s
    }
}

impl Extend<NodeId> for NodeSet {
    fn extend<I: IntoIterator<Item = NodeId>>(&mut self, iter: I) {
        for id in iter {
            self.0.insert(id.0);
        }
    }
}

impl BitAnd for &NodeSet {
    type Output = NodeSet;
    fn bitand(self, rhs: &NodeSet) -> NodeSet {
        NodeSet(&self.0 & &rhs.0)
    }
}

impl BitOr for &NodeSet {
    type Output = NodeSet;
    fn bitor(self, rhs: &NodeSet) -> NodeSet {
        NodeSet(&self.0 | &rhs.0)
    }
}

impl Sub for &NodeSet {
    type Output = NodeSet;
    fn sub(self, rhs: &NodeSet) -> NodeSet {
        NodeSet(&self.0 - &rhs.0)
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl Serialize for NodeSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for NodeSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<u64>::deserialize(d)?;
        Ok(ids.into_iter().map(NodeId).collect())
    }
}
