//! Desk-scale learning substrate: synthetic Gaussian-cluster tasks, IID and
//! non-IID partitioning, minibatch SGD with momentum for linear and MLP
//! classifiers, and top-1 evaluation.

pub mod dataset;
pub mod partition;
pub mod trainer;
pub mod workload;

use thiserror::Error;

pub use dataset::{split_dataset, synth_dataset, Dataset, SplitDataset, SynthSpec};
pub use partition::{partition, DataPartition, PartitionScheme};
pub use trainer::{evaluate, local_train, Loss, ModelFamily, TrainerConfig};
pub use workload::{invocation_seed, FederatedTask, Workload};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("divergence: reduce eta")]
    Divergence,
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyData,
    #[error("partition: {0}")]
    Partition(String),
    #[error("trainer config: {0}")]
    Config(String),
    #[error("dataset csv line {0}: {1}")]
    Csv(usize, String),
}
