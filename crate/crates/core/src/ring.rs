//! The m-bit circular identifier space.
//!
//! Every position lives in `[0, 2^m)` and all arithmetic wraps modulo `2^m`.
//! Intervals are clockwise and written `(lo, hi]`: open at the lower end,
//! closed at the upper end, which is the membership test behind Chord's
//! successor and finger rules.

use std::fmt;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest supported ring. `2^m` must fit in a `u64`.
pub const MAX_BITS: u32 = 63;

pub const DEFAULT_BITS: u32 = 16;

/// A position on the identifier ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl NodeId {
    pub const fn new(value: u64) -> Self {
        NodeId(value)
    }

    pub const fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingConfig {
    /// Ring bit width; the ring has `2^m` positions.
    pub m: u32,
    /// Root seed for every random stream in a run.
    pub seed: u64,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig {
            m: DEFAULT_BITS,
            seed: 0,
        }
    }
}

impl RingConfig {
    pub fn new(m: u32, seed: u64) -> Result<Self> {
        if m == 0 || m > MAX_BITS {
            return Err(Error::invalid(format!(
                "ring bit width must be in 1..={MAX_BITS}, got {m}"
            )));
        }
        Ok(RingConfig { m, seed })
    }

    /// Smallest ring that holds `n` dense identifiers `0..n`.
    pub fn bits_for(n: usize) -> u32 {
        let n = n.max(2) as u64;
        (64 - (n - 1).leading_zeros()).max(1)
    }

    pub fn size(&self) -> u64 {
        1u64 << self.m
    }

    fn mask(&self) -> u64 {
        self.size() - 1
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 <= self.mask()
    }

    /// `(id + offset) mod 2^m`.
    pub fn add(&self, id: NodeId, offset: u64) -> NodeId {
        NodeId(id.0.wrapping_add(offset) & self.mask())
    }

    /// Start of finger `k`: `id + 2^k mod 2^m`.
    pub fn finger_start(&self, id: NodeId, k: u32) -> NodeId {
        debug_assert!(k < self.m);
        self.add(id, 1u64 << k)
    }
}

/// `(b - a) mod 2^m`.
pub fn clockwise_distance(a: NodeId, b: NodeId, cfg: &RingConfig) -> u64 {
    b.0.wrapping_sub(a.0) & cfg.mask()
}

/// True iff `x` lies in the clockwise interval `(lo, hi]`.
///
/// When `lo == hi` the interval is the whole ring: a node that is its own
/// predecessor owns every key.
pub fn in_interval(x: NodeId, lo: NodeId, hi: NodeId, cfg: &RingConfig) -> bool {
    if lo == hi {
        return true;
    }
    let dx = clockwise_distance(lo, x, cfg);
    dx != 0 && dx <= clockwise_distance(lo, hi, cfg)
}

/// Maps a DNS name onto the ring.
///
/// FNV-1a over the UTF-8 bytes, then a splitmix64 finalizer so that the low
/// bits are as well mixed as the high ones, truncated to `m` bits. The run
/// seed salts the hash; seed 0 leaves it unsalted.
pub fn hash_name(name: &str, cfg: &RingConfig) -> Result<NodeId> {
    if name.is_empty() {
        return Err(Error::invalid("name must not be empty"));
    }
    let mut h = FnvHasher::default();
    h.write(name.as_bytes());
    Ok(NodeId(mix64(h.finish() ^ mix64(cfg.seed)) & cfg.mask()))
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// How node identifiers are laid out on the ring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdMode {
    /// `0..n`, as in the worked examples of a 16-node ring.
    #[default]
    Dense,
    /// `hash_name("node-{i}")`, probing forward on collision.
    Hashed,
}

/// Identifiers for an `n`-node network, sorted ascending.
pub fn assign_ids(n: usize, mode: IdMode, cfg: &RingConfig) -> Result<Vec<NodeId>> {
    if n == 0 {
        return Err(Error::invalid("network must have at least one node"));
    }
    if (n as u128) > cfg.size() as u128 {
        return Err(Error::invalid(format!(
            "{n} nodes do not fit in a ring of 2^{} positions",
            cfg.m
        )));
    }
    let mut ids: Vec<NodeId> = match mode {
        IdMode::Dense => (0..n as u64).map(NodeId).collect(),
        IdMode::Hashed => {
            let mut taken = std::collections::BTreeSet::new();
            for i in 0..n {
                let mut id = hash_name(&format!("node-{i}"), cfg)?;
                while !taken.insert(id) {
                    id = cfg.add(id, 1);
                }
            }
            taken.into_iter().collect()
        }
    };
    ids.sort_unstable();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m4() -> RingConfig {
        RingConfig::new(4, 0).unwrap()
    }

    #[test]
    fn distance_examples() {
        let c = m4();
        assert_eq!(clockwise_distance(NodeId(5), NodeId(6), &c), 1);
        assert_eq!(clockwise_distance(NodeId(15), NodeId(0), &c), 1);
        assert_eq!(clockwise_distance(NodeId(3), NodeId(3), &c), 0);
    }

    #[test]
    fn interval_examples() {
        let c = m4();
        assert!(in_interval(NodeId(2), NodeId(15), NodeId(4), &c));
        assert!(!in_interval(NodeId(15), NodeId(15), NodeId(4), &c));
        assert!(in_interval(NodeId(4), NodeId(15), NodeId(4), &c));
        assert!(!in_interval(NodeId(5), NodeId(15), NodeId(4), &c));
    }

    #[test]
    fn hash_rejects_empty_and_is_stable() {
        let c = RingConfig::default();
        assert!(hash_name("", &c).is_err());
        assert_eq!(
            hash_name("www.example", &c).unwrap(),
            hash_name("www.example", &c).unwrap()
        );
        assert!(c.contains(hash_name("www.example", &c).unwrap()));
    }

    #[test]
    fn bits_for_sizes() {
        assert_eq!(RingConfig::bits_for(1), 1);
        assert_eq!(RingConfig::bits_for(2), 1);
        assert_eq!(RingConfig::bits_for(16), 4);
        assert_eq!(RingConfig::bits_for(17), 5);
        assert_eq!(RingConfig::bits_for(100), 7);
        assert_eq!(RingConfig::bits_for(4096), 12);
    }

    #[test]
    fn config_bounds() {
        assert!(RingConfig::new(0, 0).is_err());
        assert!(RingConfig::new(64, 0).is_err());
        let wide = RingConfig::new(63, 0).unwrap();
        assert_eq!(
            clockwise_distance(NodeId(wide.size() - 1), NodeId(0), &wide),
            1
        );
    }

    #[test]
    fn hashed_ids_are_unique_even_when_crowded() {
        let c = RingConfig::new(6, 0).unwrap();
        let ids = assign_ids(64, IdMode::Hashed, &c).unwrap();
        assert_eq!(ids.len(), 64);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(assign_ids(65, IdMode::Hashed, &c).is_err());
    }
}
