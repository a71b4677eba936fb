//! Node identities, round numbers, device profiles and the static membership
//! registry every node keeps as its local view of the network.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MembershipError {
    #[error("invalid node id {0:?}: must be non-empty and must not contain '|'")]
    InvalidNodeId(String),
    #[error("round numbers start at 1")]
    ZeroRound,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("invalid profile for {node}: {reason}")]
    InvalidProfile { node: NodeId, reason: String },
    #[error("membership is empty")]
    Empty,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Printable node identifier. Stands in for a public key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, MembershipError> {
        let id = id.into();
        if id.is_empty() || id.contains('|') {
            return Err(MembershipError::InvalidNodeId(id));
        }
        Ok(NodeId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NodeId {
    type Error = MembershipError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        NodeId::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 1-based training round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoundNumber(u64);

impl RoundNumber {
    pub const FIRST: RoundNumber = RoundNumber(1);

    pub fn new(k: u64) -> Result<Self, MembershipError> {
        if k == 0 {
            return Err(MembershipError::ZeroRound);
        }
        Ok(RoundNumber(k))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn next(self) -> RoundNumber {
        RoundNumber(self.0 + 1)
    }
}

impl fmt::Display for RoundNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Hardware and network capacity of one device. Rates are bytes per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub node: NodeId,
    pub uplink_bps: f64,
    pub downlink_bps: f64,
    pub sec_per_local_step: f64,
    pub city_index: usize,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), MembershipError> {
        let checks = [
            ("uplink_bps", self.uplink_bps),
            ("downlink_bps", self.downlink_bps),
            ("sec_per_local_step", self.sec_per_local_step),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(MembershipError::InvalidProfile {
                    node: self.node.clone(),
                    reason: format!("{name} must be positive and finite, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// The static global node registry. Node order is the membership order used
/// for round-robin city assignment and node indexing in the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    nodes: Vec<NodeId>,
    profiles: Vec<DeviceProfile>,
    index: HashMap<NodeId, usize>,
}

impl Membership {
    pub fn new(profiles: Vec<DeviceProfile>) -> Result<Self, MembershipError> {
        if profiles.is_empty() {
            return Err(MembershipError::Empty);
        }
        let mut index = HashMap::with_capacity(profiles.len());
        for (i, p) in profiles.iter().enumerate() {
            p.validate()?;
            if index.insert(p.node.clone(), i).is_some() {
                return Err(MembershipError::DuplicateNode(p.node.clone()));
            }
        }
        let nodes = profiles.iter().map(|p| p.node.clone()).collect();
        Ok(Membership {
            nodes,
            profiles,
            index,
        })
    }

    /// `n` nodes named `n0..n{n-1}` sharing one profile shape. Handy for tests.
    pub fn uniform(n: usize, uplink_bps: f64, downlink_bps: f64, sec_per_local_step: f64) -> Self {
        let profiles = (0..n)
            .map(|i| DeviceProfile {
                node: NodeId(format!("n{i}")),
                uplink_bps,
                downlink_bps,
                sec_per_local_step,
                city_index: 0,
            })
            .collect();
        Membership::new(profiles).expect("uniform membership is valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn profiles(&self) -> &[DeviceProfile] {
        &self.profiles
    }

    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn profile(&self, node: &NodeId) -> Option<&DeviceProfile> {
        self.index_of(node).map(|i| &self.profiles[i])
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.index.contains_key(node)
    }

    pub fn node(&self, index: usize) -> &NodeId {
        &self.nodes[index]
    }

    pub fn set_city(&mut self, index: usize, city: usize) {
        self.profiles[index].city_index = city;
    }

    /// Same node set, different local ordering.
    pub fn reordered(&self, order: &[usize]) -> Membership {
        let profiles = order.iter().map(|&i| self.profiles[i].clone()).collect();
        Membership::new(profiles).expect("reordering preserves validity")
    }
}
