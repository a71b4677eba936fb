//! Decentralized deterministic peer sampling.
//!
//! Every node derives the round-`k` sample from its membership view and `k`
//! alone: each member is ranked by `SHA-256(id | k)`, the ranking is sorted
//! byte-lexicographically and the first `s` members form the sample. The
//! aggregator is the participant with the largest uplink capacity, ties
//! broken by node id. Two nodes holding the same node set (in any order) and
//! the same bandwidth map always agree on both.

use std::cmp::Ordering;
use std::io::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::membership::{Membership, NodeId, RoundNumber};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("no candidates")]
    NoCandidates,
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("unknown bandwidth for {0}")]
    UnknownBandwidth(NodeId),
}

/// Sort key of one candidate for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankKey {
    pub digest: [u8; 32],
    pub node: NodeId,
}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.digest
            .cmp(&other.digest)
            .then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The round-`k` participant list and its aggregator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub k: RoundNumber,
    pub participants: Vec<NodeId>,
    pub aggregator: Option<NodeId>,
}

impl Sample {
    pub fn contains(&self, node: &NodeId) -> bool {
        self.participants.contains(node)
    }
}

fn digest(node: &NodeId, round: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(node.as_str().as_bytes());
    hasher.update(b"|");
    hasher.update(round);
    hasher.finalize().into()
}

/// Decimal digits of `k` in a stack buffer.
fn round_digits(k: RoundNumber, buf: &mut [u8; 20]) -> usize {
    let mut cursor = &mut buf[..];
    write!(cursor, "{}", k.get()).expect("u64 fits in 20 digits");
    20 - cursor.len()
}

/// `SHA-256(id ++ "|" ++ decimal(k))`.
pub fn node_rank_key(node: &NodeId, k: RoundNumber) -> RankKey {
    let mut buf = [0u8; 20];
    let len = round_digits(k, &mut buf);
    RankKey {
        digest: digest(node, &buf[..len]),
        node: node.clone(),
    }
}

/// Participants of round `k`, aggregator unset.
pub fn sample(k: RoundNumber, s: usize, membership: &Membership) -> Result<Sample, SamplerError> {
    if s == 0 {
        return Err(SamplerError::ZeroSampleSize);
    }
    if membership.is_empty() {
        return Err(SamplerError::NoCandidates);
    }
    let mut buf = [0u8; 20];
    let len = round_digits(k, &mut buf);
    // Same order as `RankKey`, without cloning every id.
    let mut keys: Vec<([u8; 32], &NodeId)> = membership
        .nodes()
        .iter()
        .map(|j| (digest(j, &buf[..len]), j))
        .collect();
    let take = s.min(keys.len());
    if take < keys.len() {
        keys.select_nth_unstable(take - 1);
        keys.truncate(take);
    }
    keys.sort_unstable();
    Ok(Sample {
        k,
        participants: keys.into_iter().map(|(_, node)| node.clone()).collect(),
        aggregator: None,
    })
}

/// Highest-uplink participant of `participants`, ties to the smaller id.
pub fn elect_aggregator(
    participants: &[NodeId],
    membership: &Membership,
) -> Result<NodeId, SamplerError> {
    let mut best: Option<(&NodeId, f64)> = None;
    for node in participants {
        let bw = membership
            .profile(node)
            .ok_or_else(|| SamplerError::UnknownBandwidth(node.clone()))?
            .uplink_bps;
        best = match best {
            None => Some((node, bw)),
            Some((cur, cur_bw)) if bw > cur_bw || (bw == cur_bw && node < cur) => Some((node, bw)),
            keep => keep,
        };
    }
    best.map(|(n, _)| n.clone())
        .ok_or(SamplerError::NoCandidates)
}

pub fn aggregator(
    k: RoundNumber,
    s: usize,
    membership: &Membership,
) -> Result<NodeId, SamplerError> {
    let sample = sample(k, s, membership)?;
    elect_aggregator(&sample.participants, membership)
}

/// Sample with its aggregator filled in.
pub fn sample_with_aggregator(
    k: RoundNumber,
    s: usize,
    membership: &Membership,
) -> Result<Sample, SamplerError> {
    let mut sample = sample(k, s, membership)?;
    sample.aggregator = Some(elect_aggregator(&sample.participants, membership)?);
    Ok(sample)
}
