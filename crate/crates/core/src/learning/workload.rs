use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use super::partition::DataPartition;
use super::trainer::{evaluate, local_train, ModelFamily, TrainerConfig};
use super::LearningError;
use crate::membership::NodeId;
use crate::model::ModelParameters;

/// What a node's local device can do: create an initial model and train it.
pub trait Workload {
    fn init_model(&self, seed: u64) -> ModelParameters;

    /// Local training on `node`'s shard. `key` identifies the invocation
    /// (the round number for sampled protocols), so the result does not
    /// depend on event order.
    fn train(
        &self,
        node: &NodeId,
        key: u64,
        model: &ModelParameters,
    ) -> Result<ModelParameters, LearningError>;

    fn local_steps(&self) -> u32;

    fn evaluate(&self, model: &ModelParameters) -> Result<f64, LearningError>;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic per-invocation seed.
pub fn invocation_seed(node_seed: u64, key: u64) -> u64 {
    splitmix64(node_seed ^ splitmix64(key))
}

/// A classification task split across nodes, with a global test set.
#[derive(Debug, Clone)]
pub struct FederatedTask {
    pub family: ModelFamily,
    pub trainer: TrainerConfig,
    pub shards: BTreeMap<NodeId, DataPartition>,
    pub test: Dataset,
}

impl FederatedTask {
    pub fn shard(&self, node: &NodeId) -> Result<&DataPartition, LearningError> {
        self.shards
            .get(node)
            .ok_or_else(|| LearningError::Partition(format!("no shard for {node}")))
    }
}

impl Workload for FederatedTask {
    fn init_model(&self, seed: u64) -> ModelParameters {
        self.family.init(seed)
    }

    fn train(
        &self,
        node: &NodeId,
        key: u64,
        model: &ModelParameters,
    ) -> Result<ModelParameters, LearningError> {
        let shard = self.shard(node)?;
        let mut rng = ChaCha8Rng::seed_from_u64(invocation_seed(shard.draw_seed, key));
        local_train(model, &shard.data, &self.family, &self.trainer, &mut rng)
    }

    fn local_steps(&self) -> u32 {
        self.trainer.local_steps
    }

    fn evaluate(&self, model: &ModelParameters) -> Result<f64, LearningError> {
        evaluate(model, &self.test, &self.family)
    }
}
