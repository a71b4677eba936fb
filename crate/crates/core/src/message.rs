use serde::{Deserialize, Serialize};

use crate::membership::{NodeId, RoundNumber};
use crate::model::ModelParameters;

/// Messages exchanged between nodes. Every variant carries one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    Train {
        k: RoundNumber,
        model: ModelParameters,
    },
    Aggregate {
        k: RoundNumber,
        model: ModelParameters,
        from: NodeId,
    },
    GossipModel {
        model: ModelParameters,
        from: NodeId,
    },
}

impl Message {
    pub fn model(&self) -> &ModelParameters {
        match self {
            Message::Train { model, .. }
            | Message::Aggregate { model, .. }
            | Message::GossipModel { model, .. } => model,
        }
    }

    pub fn wire_bytes(&self) -> u64 {
        self.model().size_bytes()
    }
}
