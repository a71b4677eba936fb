use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::LearningError;
use crate::membership::{Membership, NodeId};

const MAX_DEALS: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartitionScheme {
    Iid,
    /// Per-node class mixture drawn from `Dir(alpha)`.
    Dirichlet {
        alpha: f64,
    },
    /// Label-sorted data cut into shards, `shards_per_node` dealt to each node.
    LabelShards {
        shards_per_node: usize,
    },
}

/// One node's local shard.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPartition {
    pub node: NodeId,
    pub indices: Vec<usize>,
    pub data: Dataset,
    pub draw_seed: u64,
}

/// Splits `train` across every member. Each training point lands on exactly
/// one node and every node receives at least one point.
pub fn partition(
    train: &Dataset,
    membership: &Membership,
    scheme: PartitionScheme,
    seed: u64,
) -> Result<BTreeMap<NodeId, DataPartition>, LearningError> {
    let n = membership.len();
    if train.len() < n {
        return Err(LearningError::Partition(format!(
            "{} samples cannot cover {} nodes",
            train.len(),
            n
        )));
    }
    match scheme {
        PartitionScheme::Dirichlet { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
            return Err(LearningError::Partition(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        PartitionScheme::LabelShards { shards_per_node }
            if shards_per_node == 0 || n * shards_per_node > train.len() =>
        {
            return Err(LearningError::Partition(
                "not enough samples for label shards".into(),
            ));
        }
        _ => {}
    }

    for attempt in 0..MAX_DEALS {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let assignment = match scheme {
            PartitionScheme::Iid => deal_iid(train.len(), n, &mut rng),
            PartitionScheme::Dirichlet { alpha } => deal_dirichlet(train, n, alpha, &mut rng),
            PartitionScheme::LabelShards { shards_per_node } => {
                deal_shards(train, n, shards_per_node, &mut rng)
            }
        };
        if assignment.iter().any(Vec::is_empty) {
            continue;
        }
        return Ok(assignment
            .into_iter()
            .enumerate()
            .map(|(i, mut indices)| {
                indices.sort_unstable();
                let node = membership.node(i).clone();
                let part = DataPartition {
                    node: node.clone(),
                    data: train.subset(&indices),
                    indices,
                    draw_seed: rng.random(),
                };
                (node, part)
            })
            .collect());
    }
    Err(LearningError::Partition(format!(
        "a node received zero samples after {MAX_DEALS} deals"
    )))
}

fn quotas(total: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| total / n + usize::from(i < total % n))
        .collect()
}

fn deal_iid(total: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(rng);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for q in quotas(total, n) {
        out.push(perm[start..start + q].to_vec());
        start += q;
    }
    out
}

/// Each node draws a class mixture from `Dir(alpha)` and fills an equal
/// quota by sampling classes from it, renormalizing over classes whose pool
/// is not yet exhausted.
fn deal_dirichlet(train: &Dataset, n: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let classes = train.classes;
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in train.labels.iter().enumerate() {
        pools[l].push(i);
    }
    for pool in pools.iter_mut() {
        pool.shuffle(rng);
    }
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let mut out = Vec::with_capacity(n);
    for quota in quotas(train.len(), n) {
        let mut mix: Vec<f64> = (0..classes).map(|_| gamma.sample(rng)).collect();
        if mix.iter().sum::<f64>() <= 0.0 {
            mix[rng.random_range(0..classes)] = 1.0;
        }
        let mut mine = Vec::with_capacity(quota);
        for _ in 0..quota {
            let weight: f64 = (0..classes)
                .filter(|&c| !pools[c].is_empty())
                .map(|c| mix[c])
                .sum();
            let class = if weight > 0.0 {
                let mut u = rng.random::<f64>() * weight;
                let mut chosen = None;
                for c in (0..classes).filter(|&c| !pools[c].is_empty()) {
                    chosen = Some(c);
                    if u < mix[c] {
                        break;
                    }
                    u -= mix[c];
                }
                chosen.expect("some pool non-empty")
            } else {
                // The mixture's classes are all used up; fall back to the largest pool.
                (0..classes)
                    .max_by_key(|&c| (pools[c].len(), std::cmp::Reverse(c)))
                    .unwrap()
            };
            mine.push(pools[class].pop().expect("pool non-empty"));
        }
        out.push(mine);
    }
    out
}

fn deal_shards(
    train: &Dataset,
    n: usize,
    per_node: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| train.labels[i]);
    let n_shards = n * per_node;
    let mut shards = Vec::with_capacity(n_shards);
    let mut start = 0;
    for q in quotas(train.len(), n_shards) {
        shards.push(order[start..start + q].to_vec());
        start += q;
    }
    let mut shard_ids: Vec<usize> = (0..n_shards).collect();
    shard_ids.shuffle(rng);
    shard_ids
        .chunks(per_node)
        .map(|ids| {
            ids.iter()
                .flat_map(|&s| shards[s].iter().copied())
                .collect()
        })
        .collect()
}
