use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ring::NodeId;

/// Per-origin update counters, merged by element-wise maximum.
///
/// Absent entries read as zero and zero counters are never stored, so two
/// vectors compare equal exactly when they agree on every origin.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionVector(BTreeMap<NodeId, u64>);

/// Compact summary used by the control API for large networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VvDigest {
    pub entries: usize,
    pub max: u64,
}

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: NodeId) -> u64 {
        self.0.get(&id).copied().unwrap_or(0)
    }

    /// Sets an entry. Counters never decrease through the public API; this
    /// exists for tests and fixtures.
    pub fn set(&mut self, id: NodeId, value: u64) {
        if value == 0 {
            self.0.remove(&id);
        } else {
            self.0.insert(id, value);
        }
    }

    /// Increments `id`'s counter and returns the new value.
    pub fn bump(&mut self, id: NodeId) -> u64 {
        let c = self.0.entry(id).or_insert(0);
        *c += 1;
        *c
    }

    pub fn merge(&mut self, other: &VersionVector) {
        for (&id, &v) in &other.0 {
            let e = self.0.entry(id).or_insert(0);
            if v > *e {
                *e = v;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn digest(&self) -> VvDigest {
        VvDigest {
            entries: self.0.len(),
            max: self.0.values().copied().max().unwrap_or(0),
        }
    }

    /// True iff every counter here is at least the matching one in `other`.
    pub fn dominates(&self, other: &VersionVector) -> bool {
        other.iter().all(|(k, v)| self.get(k) >= v)
    }
}

impl FromIterator<(NodeId, u64)> for VersionVector {
    fn from_iter<I: IntoIterator<Item = (NodeId, u64)>>(iter: I) -> Self {
        let mut vv = VersionVector::new();
        for (k, v) in iter {
            vv.set(k, v);
        }
        vv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_elementwise_max() {
        let (a, b) = (NodeId(1), NodeId(2));
        let mut local: VersionVector = [(a, 2), (b, 0)].into_iter().collect();
        let msg: VersionVector = [(a, 1), (b, 5)].into_iter().collect();
        local.merge(&msg);
        assert_eq!(local.get(a), 2);
        assert_eq!(local.get(b), 5);
        assert!(local.dominates(&msg));
    }

    #[test]
    fn zero_entries_are_implicit() {
        let mut vv = VersionVector::new();
        vv.set(NodeId(3), 0);
        assert_eq!(vv, VersionVector::new());
        assert_eq!(vv.bump(NodeId(3)), 1);
        assert_eq!(vv.digest(), VvDigest { entries: 1, max: 1 });
        assert_eq!(serde_json::to_string(&vv).unwrap(), r#"{"3":1}"#);
    }
}
