//! Consistent-hash ring of data nodes.
//!
//! Every physical node is placed at the hash of its address on the 32-bit
//! circle. Trusted nodes may add virtual replicas at `address#v<k>`. An
//! untrusted node routes to the first trusted entry strictly clockwise of
//! its own position.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}

/// Coordinate on the hash circle `[0, 2^32 - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RingPosition(pub u32);

impl RingPosition {
    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for RingPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trust {
    Trusted,
    Untrusted,
}

impl Trust {
    pub fn is_trusted(self) -> bool {
        matches!(self, Trust::Trusted)
    }
}

impl fmt::Display for Trust {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trust::Trusted => "trusted",
            Trust::Untrusted => "untrusted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeDescriptor {
    pub id: String,
    pub address: String,
    pub trust: Trust,
    /// Owning physical node for virtual replicas.
    pub virtual_of: Option<String>,
}

impl NodeDescriptor {
    pub fn new(id: impl Into<String>, address: impl Into<String>, trust: Trust) -> Self {
        Self {
            id: id.into(),
            address: address.into(),
            trust,
            virtual_of: None,
        }
    }

    pub fn trusted(id: impl Into<String>, address: impl Into<String>) -> Self {
        Self::new(id, address, Trust::Trusted)
    }

    pub fn untrusted(id: impl Into<String>, address: impl Into<String>) -> Self {
        Self::new(id, address, Trust::Untrusted)
    }

    pub fn is_virtual(&self) -> bool {
        self.virtual_of.is_some()
    }
}

/// First four bytes, big-endian, of SHA-256 over the UTF-8 address.
pub fn position_of(address: &str) -> Result<RingPosition, RingError> {
    if address.is_empty() {
        return Err(RingError::InvalidArgument("empty address".into()));
    }
    let digest = Sha256::digest(address.as_bytes());
    Ok(RingPosition(u32::from_be_bytes([
        digest[0], digest[1], digest[2], digest[3],
    ])))
}

fn virtual_address(address: &str, k: usize) -> String {
    format!("{address}#v{k}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingEntry {
    pub position: RingPosition,
    pub node: NodeDescriptor,
}

/// Immutable sorted placement of nodes on the ring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingTopology {
    entries: Vec<RingEntry>,
    physical: BTreeMap<String, NodeDescriptor>,
    virtual_count: usize,
}

impl RingTopology {
    /// Places every node and `virtual_count` replicas per trusted node.
    ///
    /// Entries are ordered by position, ties broken by id ascending.
    pub fn build(nodes: &[NodeDescriptor], virtual_count: usize) -> Result<Self, RingError> {
        let mut physical = BTreeMap::new();
        let mut entries = Vec::with_capacity(nodes.len());
        for node in nodes {
            if node.id.is_empty() {
                return Err(RingError::InvalidArgument("empty node id".into()));
            }
            if node.virtual_of.is_some() {
                return Err(RingError::InvalidArgument(format!(
                    "node {} is virtual; pass physical nodes only",
                    node.id
                )));
            }
            if physical.insert(node.id.clone(), node.clone()).is_some() {
                return Err(RingError::InvalidArgument(format!(
                    "duplicate node id {}",
                    node.id
                )));
            }
            entries.push(RingEntry {
                position: position_of(&node.address)?,
                node: node.clone(),
            });
            if node.trust.is_trusted() {
                for k in 1..=virtual_count {
                    let address = virtual_address(&node.address, k);
                    entries.push(RingEntry {
                        position: position_of(&address)?,
                        node: NodeDescriptor {
                            id: virtual_address(&node.id, k),
                            address,
                            trust: Trust::Trusted,
                            virtual_of: Some(node.id.clone()),
                        },
                    });
                }
            }
        }
        if !physical.values().any(|n| n.trust.is_trusted()) {
            return Err(RingError::InvalidTopology("no trusted nodes".into()));
        }
        entries.sort_by(|a, b| {
            a.position
                .cmp(&b.position)
                .then_with(|| a.node.id.cmp(&b.node.id))
        });
        if entries
            .windows(2)
            .any(|w| w[0].position == w[1].position && w[0].node.id == w[1].node.id)
        {
            return Err(RingError::InvalidArgument(
                "virtual replica id collides with a physical id".into(),
            ));
        }
        Ok(Self {
            entries,
            physical,
            virtual_count,
        })
    }

    pub fn entries(&self) -> &[RingEntry] {
        &self.entries
    }

    pub fn virtual_count(&self) -> usize {
        self.virtual_count
    }

    /// Physical node count `n`.
    pub fn node_count(&self) -> usize {
        self.physical.len()
    }

    /// Trusted physical node count `m`.
    pub fn trusted_count(&self) -> usize {
        self.physical.values().filter(|n| n.trust.is_trusted()).count()
    }

    pub fn node(&self, id: &str) -> Option<&NodeDescriptor> {
        self.physical.get(id)
    }

    /// Physical nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.physical.values()
    }

    /// Position of a physical node's own (non-virtual) entry.
    pub fn physical_position(&self, id: &str) -> Option<RingPosition> {
        self.entries
            .iter()
            .find(|e| e.node.id == id && !e.node.is_virtual())
            .map(|e| e.position)
    }

    fn resolve(&self, node: &NodeDescriptor) -> &NodeDescriptor {
        let owner = node.virtual_of.as_deref().unwrap_or(&node.id);
        &self.physical[owner]
    }

    /// First trusted entry strictly clockwise of `from`, resolved to its
    /// physical owner.
    pub fn trusted_successor(&self, from: RingPosition) -> &NodeDescriptor {
        let start = self.entries.partition_point(|e| e.position <= from);
        let entry = self.entries[start..]
            .iter()
            .chain(self.entries[..start].iter())
            .find(|e| e.node.trust.is_trusted())
            .expect("ring holds at least one trusted entry");
        self.resolve(&entry.node)
    }

    /// Trusted physical nodes in clockwise order of their own entries,
    /// starting from the smallest position.
    pub fn trusted_cycle(&self) -> Vec<&NodeDescriptor> {
        self.entries
            .iter()
            .filter(|e| e.node.trust.is_trusted() && !e.node.is_virtual())
            .map(|e| &e.node)
            .collect()
    }

    /// Next trusted physical node after `id` in [`Self::trusted_cycle`] order.
    pub fn ring_successor(&self, id: &str) -> Option<&NodeDescriptor> {
        let cycle = self.trusted_cycle();
        let i = cycle.iter().position(|n| n.id == id)?;
        Some(cycle[(i + 1) % cycle.len()])
    }

    /// One line per entry: `position<TAB>id<TAB>trust<TAB>virtual_of`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.position,
                e.node.id,
                e.node.trust,
                e.node.virtual_of.as_deref().unwrap_or("-")
            ));
        }
        out
    }
}

/// Free-function form of [`RingTopology::build`].
pub fn build_ring(nodes: &[NodeDescriptor], virtual_count: usize) -> Result<RingTopology, RingError> {
    RingTopology::build(nodes, virtual_count)
}

/// Half-open arc `[start, end)` walking clockwise; `start == end` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RingArc {
    pub start: RingPosition,
    pub end: RingPosition,
}

impl RingArc {
    pub fn contains(&self, p: RingPosition) -> bool {
        use std::cmp::Ordering::*;
        match self.start.cmp(&self.end) {
            Less => self.start <= p && p < self.end,
            Greater => p >= self.start || p < self.end,
            Equal => false,
        }
    }
}

/// Arcs whose trusted successor may differ after one node was added.
///
/// One arc per inserted entry `e`, running from the nearest trusted entry
/// preceding `e` in `after` up to `e`. Positions outside every arc keep
/// their trusted successor.
pub fn remap_delta(before: &RingTopology, after: &RingTopology) -> Result<Vec<RingArc>, RingError> {
    if before.virtual_count != after.virtual_count {
        return Err(RingError::InvalidArgument("virtual counts differ".into()));
    }
    let added: Vec<&String> = after
        .physical
        .keys()
        .filter(|id| !before.physical.contains_key(*id))
        .collect();
    if added.len() != 1 || after.physical.len() != before.physical.len() + 1 {
        return Err(RingError::InvalidArgument(
            "topologies must differ by exactly one added node".into(),
        ));
    }
    let added = added[0];
    if before.physical.iter().any(|(id, n)| after.physical.get(id) != Some(n)) {
        return Err(RingError::InvalidArgument("existing node changed".into()));
    }
    let old: BTreeSet<(RingPosition, &str)> = before
        .entries
        .iter()
        .map(|e| (e.position, e.node.id.as_str()))
        .collect();
    let mut arcs = Vec::new();
    let mut kept = 0usize;
    for (i, e) in after.entries.iter().enumerate() {
        if old.contains(&(e.position, e.node.id.as_str())) {
            kept += 1;
            continue;
        }
        let owner = e.node.virtual_of.as_ref().unwrap_or(&e.node.id);
        if owner != added {
            return Err(RingError::InvalidArgument(format!(
                "unexpected entry {} in after",
                e.node.id
            )));
        }
        let n = after.entries.len();
        let pred = (1..n)
            .map(|k| &after.entries[(i + n - k) % n])
            .find(|p| p.node.trust.is_trusted())
            .map(|p| p.position)
            .unwrap_or(e.position);
        arcs.push(RingArc {
            start: pred,
            end: e.position,
        });
    }
    if kept != before.entries.len() {
        return Err(RingError::InvalidArgument("entries removed".into()));
    }
    Ok(arcs)
}
