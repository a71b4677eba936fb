//! Driving `NodeState` without the simulator: every effect is executed
//! immediately from a FIFO queue, which is enough to watch rounds chain
//! together. The workload is a toy that pulls the model towards a per-node
//! target, so the aggregate converges to the mean of the targets.
//!
//!     cargo run --example protocol_by_hand

use std::collections::{BTreeMap, VecDeque};

use plexus::learning::{LearningError, Workload};
use plexus::membership::{Membership, NodeId};
use plexus::message::Message;
use plexus::model::ModelParameters;
use plexus::protocol::{Effect, NodeState, ProtocolConfig, ProtocolMetric};

struct PullToTarget;

fn target(node: &NodeId) -> f64 {
    node.as_str()[1..].parse::<f64>().unwrap()
}

impl Workload for PullToTarget {
    fn init_model(&self, _seed: u64) -> ModelParameters {
        ModelParameters::zeros(1)
    }

    fn train(
        &self,
        node: &NodeId,
        _key: u64,
        model: &ModelParameters,
    ) -> Result<ModelParameters, LearningError> {
        let x = model.values()[0];
        Ok(ModelParameters::new(vec![x + 0.5 * (target(node) - x)]).unwrap())
    }

    fn local_steps(&self) -> u32 {
        1
    }

    fn evaluate(&self, model: &ModelParameters) -> Result<f64, LearningError> {
        Ok(model.values()[0])
    }
}

enum Work {
    Deliver(NodeId, Message),
    Done(NodeId, plexus::protocol::TrainedModel),
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let membership = Membership::uniform(10, 1e6, 1e6, 1.0);
    let config = ProtocolConfig {
        s: 4,
        sf: 0.75,
        max_rounds: 8,
        ..ProtocolConfig::default()
    };
    let mean: f64 = membership.nodes().iter().map(target).sum::<f64>() / 10.0;
    println!(
        "threshold {} of {}; node targets average {mean}",
        config.threshold(),
        config.s
    );

    let mut nodes: BTreeMap<NodeId, NodeState> = membership
        .nodes()
        .iter()
        .map(|id| (id.clone(), NodeState::new(id.clone(), config.clone())))
        .collect();

    let mut queue = VecDeque::new();
    let mut effects = Vec::new();
    for (id, node) in nodes.iter_mut() {
        effects.extend(
            node.bootstrap(&membership, &PullToTarget)?
                .into_iter()
                .map(|e| (id.clone(), e)),
        );
    }

    let mut sends = 0;
    loop {
        for (from, effect) in effects.drain(..) {
            match effect {
                Effect::Send { dst, msg, .. } => {
                    if dst != from {
                        sends += 1;
                    }
                    queue.push_back(Work::Deliver(dst, msg));
                }
                Effect::ScheduleCompute { job, .. } => queue.push_back(Work::Done(from, job)),
                Effect::Metric(ProtocolMetric::RoundAggregated {
                    k,
                    model,
                    contributors,
                    ..
                }) => {
                    let ids: Vec<&str> = contributors.iter().map(|c| c.as_str()).collect();
                    println!(
                        "round {k}: {from} averaged [{}] -> {:.3}",
                        ids.join(" "),
                        model.values()[0]
                    );
                }
                Effect::Metric(ProtocolMetric::LateModel { k, from: late }) => {
                    println!("round {k}: model from {late} arrived late and was dropped");
                }
                Effect::Metric(_) => {}
                Effect::Terminal { k } => println!("{from} closed round {k}, the last one"),
            }
        }
        let Some(work) = queue.pop_front() else { break };
        effects = match work {
            Work::Deliver(dst, msg) => {
                let out =
                    nodes
                        .get_mut(&dst)
                        .unwrap()
                        .on_message(msg, &membership, &PullToTarget)?;
                out.into_iter().map(|e| (dst.clone(), e)).collect()
            }
            Work::Done(node, job) => {
                let out = nodes
                    .get_mut(&node)
                    .unwrap()
                    .on_compute_done(job, &membership)?;
                out.into_iter().map(|e| (node.clone(), e)).collect()
            }
        };
    }
    println!("{sends} network messages");
    Ok(())
}
