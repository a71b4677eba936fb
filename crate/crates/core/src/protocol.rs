//! The Plexus node state machine.
//!
//! Rounds are push-driven: the round-`k` aggregator sends the aggregated
//! model to every member of the round-`k+1` sample, each member trains it and
//! sends the result to the round-`k+1` aggregator, which averages the first
//! `floor(s * sf)` arrivals and starts the next round. Handlers are pure
//! transitions `(state, message) -> (state, effects)`; the caller executes
//! the effects (network sends, compute jobs, metrics).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::{LearningError, Workload};
use crate::membership::{Membership, NodeId, RoundNumber};
use crate::message::Message;
use crate::model::{average_models, ModelError, ModelParameters};
use crate::sampler::{self, SamplerError};
use crate::simnet::compute_time;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("misrouted aggregate for round {k}: {me} is not its aggregator")]
    MisroutedAggregate { k: RoundNumber, me: NodeId },
    #[error("unexpected message for a Plexus node")]
    UnexpectedMessage,
    #[error("invalid protocol config: {0}")]
    Config(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Sample size.
    pub s: usize,
    /// Success fraction: the aggregator fires after `floor(s * sf)` models.
    pub sf: f64,
    pub max_rounds: u64,
    /// All round-1 participants start from the model seeded by `init_seed`;
    /// otherwise each derives its own from `(init_seed, id)`.
    pub shared_init: bool,
    pub init_seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            s: 13,
            sf: 0.8,
            max_rounds: 1000,
            shared_init: true,
            init_seed: 0,
        }
    }
}

impl ProtocolConfig {
    /// Number of models that triggers aggregation, `floor(s * sf)`.
    pub fn threshold(&self) -> usize {
        (self.s as f64 * self.sf).floor() as usize
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.s == 0 {
            return Err(ProtocolError::Config("s must be at least 1".into()));
        }
        if !(self.sf > 0.0 && self.sf <= 1.0) {
            return Err(ProtocolError::Config(format!(
                "sf must be in (0, 1], got {}",
                self.sf
            )));
        }
        if self.threshold() == 0 {
            return Err(ProtocolError::Config(format!(
                "floor(s * sf) = 0 for s = {}, sf = {}",
                self.s, self.sf
            )));
        }
        if self.max_rounds == 0 {
            return Err(ProtocolError::Config(
                "max_rounds must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Threshold against the sample actually drawn (the membership may be
    /// smaller than `s`).
    fn threshold_for(&self, sample_len: usize) -> usize {
        self.threshold().min(sample_len).max(1)
    }
}

/// A locally trained model waiting for its compute time to elapse.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub k: RoundNumber,
    pub model: ModelParameters,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolMetric {
    TrainingStarted {
        k: RoundNumber,
        seconds: f64,
    },
    RoundAggregated {
        k: RoundNumber,
        model: ModelParameters,
        contributors: Vec<NodeId>,
        participants: usize,
    },
    LateModel {
        k: RoundNumber,
        from: NodeId,
    },
    DuplicateAggregate {
        k: RoundNumber,
        from: NodeId,
    },
    DuplicateTrain {
        k: RoundNumber,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Send {
        dst: NodeId,
        msg: Message,
        bytes: u64,
    },
    ScheduleCompute {
        duration: f64,
        job: TrainedModel,
    },
    Metric(ProtocolMetric),
    /// The experiment reached `max_rounds`.
    Terminal {
        k: RoundNumber,
    },
}

/// Per-node protocol state.
#[derive(Debug, Clone)]
pub struct NodeState {
    me: NodeId,
    config: ProtocolConfig,
    pending_models: BTreeMap<RoundNumber, Vec<(NodeId, ModelParameters)>>,
    rounds_aggregated: BTreeSet<RoundNumber>,
    rounds_trained: BTreeSet<RoundNumber>,
}

impl NodeState {
    pub fn new(me: NodeId, config: ProtocolConfig) -> Self {
        NodeState {
            me,
            config,
            pending_models: BTreeMap::new(),
            rounds_aggregated: BTreeSet::new(),
            rounds_trained: BTreeSet::new(),
        }
    }

    pub fn me(&self) -> &NodeId {
        &self.me
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn pending(&self, k: RoundNumber) -> usize {
        self.pending_models.get(&k).map_or(0, Vec::len)
    }

    pub fn has_aggregated(&self, k: RoundNumber) -> bool {
        self.rounds_aggregated.contains(&k)
    }

    /// Seed of this node's initial model.
    pub fn init_seed(&self) -> u64 {
        if self.config.shared_init {
            self.config.init_seed
        } else {
            let digest = sampler::node_rank_key(&self.me, RoundNumber::FIRST).digest;
            self.config.init_seed ^ u64::from_le_bytes(digest[..8].try_into().unwrap())
        }
    }

    /// Round-1 participants hand themselves a fresh model.
    pub fn bootstrap(
        &mut self,
        membership: &Membership,
        workload: &dyn Workload,
    ) -> Result<Vec<Effect>, ProtocolError> {
        let first = sampler::sample(RoundNumber::FIRST, self.config.s, membership)?;
        if !first.contains(&self.me) {
            return Ok(Vec::new());
        }
        let model = workload.init_model(self.init_seed());
        let msg = Message::Train {
            k: RoundNumber::FIRST,
            model,
        };
        Ok(vec![Effect::Send {
            dst: self.me.clone(),
            bytes: msg.wire_bytes(),
            msg,
        }])
    }

    pub fn on_message(
        &mut self,
        msg: Message,
        membership: &Membership,
        workload: &dyn Workload,
    ) -> Result<Vec<Effect>, ProtocolError> {
        match msg {
            Message::Train { k, model } => self.on_train(k, model, membership, workload),
            Message::Aggregate { k, model, from } => self.on_aggregate(k, model, from, membership),
            Message::GossipModel { .. } => Err(ProtocolError::UnexpectedMessage),
        }
    }

    /// Trains `model` and schedules the compute delay; the trained model is
    /// released by `on_compute_done`.
    pub fn on_train(
        &mut self,
        k: RoundNumber,
        model: ModelParameters,
        membership: &Membership,
        workload: &dyn Workload,
    ) -> Result<Vec<Effect>, ProtocolError> {
        if k.get() > self.config.max_rounds {
            return Ok(vec![Effect::Terminal { k }]);
        }
        if !self.rounds_trained.insert(k) {
            return Ok(vec![Effect::Metric(ProtocolMetric::DuplicateTrain { k })]);
        }
        debug_assert!(sampler::sample(k, self.config.s, membership)?.contains(&self.me));
        let profile = membership
            .profile(&self.me)
            .ok_or_else(|| SamplerError::UnknownBandwidth(self.me.clone()))?;
        let duration = compute_time(profile, workload.local_steps());
        let trained = workload.train(&self.me, k.get(), &model)?;
        Ok(vec![
            Effect::Metric(ProtocolMetric::TrainingStarted {
                k,
                seconds: duration,
            }),
            Effect::ScheduleCompute {
                duration,
                job: TrainedModel { k, model: trained },
            },
        ])
    }

    /// Training finished: ship the model to the round's aggregator.
    pub fn on_compute_done(
        &mut self,
        job: TrainedModel,
        membership: &Membership,
    ) -> Result<Vec<Effect>, ProtocolError> {
        let aggregator = sampler::aggregator(job.k, self.config.s, membership)?;
        let msg = Message::Aggregate {
            k: job.k,
            model: job.model,
            from: self.me.clone(),
        };
        Ok(vec![Effect::Send {
            dst: aggregator,
            bytes: msg.wire_bytes(),
            msg,
        }])
    }

    pub fn on_aggregate(
        &mut self,
        k: RoundNumber,
        model: ModelParameters,
        from: NodeId,
        membership: &Membership,
    ) -> Result<Vec<Effect>, ProtocolError> {
        let sample = sampler::sample_with_aggregator(k, self.config.s, membership)?;
        if sample.aggregator.as_ref() != Some(&self.me) {
            return Err(ProtocolError::MisroutedAggregate {
                k,
                me: self.me.clone(),
            });
        }
        if self.rounds_aggregated.contains(&k) {
            return Ok(vec![Effect::Metric(ProtocolMetric::LateModel { k, from })]);
        }
        let pending = self.pending_models.entry(k).or_default();
        if pending.iter().any(|(j, _)| *j == from) {
            return Ok(vec![Effect::Metric(ProtocolMetric::DuplicateAggregate {
                k,
                from,
            })]);
        }
        pending.push((from, model));
        if pending.len() < self.config.threshold_for(sample.participants.len()) {
            return Ok(Vec::new());
        }

        let received = self.pending_models.remove(&k).unwrap_or_default();
        self.rounds_aggregated.insert(k);
        let (contributors, models): (Vec<NodeId>, Vec<ModelParameters>) =
            received.into_iter().unzip();
        let aggregated = average_models(&models)?;

        let mut effects = vec![Effect::Metric(ProtocolMetric::RoundAggregated {
            k,
            model: aggregated.clone(),
            contributors,
            participants: sample.participants.len(),
        })];
        if k.get() >= self.config.max_rounds {
            effects.push(Effect::Terminal { k });
            return Ok(effects);
        }
        let next = k.next();
        for dst in sampler::sample(next, self.config.s, membership)?.participants {
            let msg = Message::Train {
                k: next,
                model: aggregated.clone(),
            };
            effects.push(Effect::Send {
                dst,
                bytes: msg.wire_bytes(),
                msg,
            });
        }
        Ok(effects)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membership::DeviceProfile;

    /// Adds 1 to every coordinate; lets tests follow models through rounds.
    struct PlusOne;

    impl Workload for PlusOne {
        fn init_model(&self, seed: u64) -> ModelParameters {
            ModelParameters::new(vec![seed as f64, 0.0]).unwrap()
        }

        fn train(
            &self,
            _: &NodeId,
            _: u64,
            m: &ModelParameters,
        ) -> Result<ModelParameters, LearningError> {
            Ok(ModelParameters::new(m.values().iter().map(|v| v + 1.0).collect()).unwrap())
        }

        fn local_steps(&self) -> u32 {
            5
        }

        fn evaluate(&self, _: &ModelParameters) -> Result<f64, LearningError> {
            Ok(0.0)
        }
    }

    fn round(k: u64) -> RoundNumber {
        RoundNumber::new(k).unwrap()
    }

    fn membership(n: usize) -> Membership {
        Membership::new(
            (0..n)
                .map(|i| DeviceProfile {
                    node: NodeId::new(format!("n{i}")).unwrap(),
                    uplink_bps: 1e6 * (1 + i) as f64,
                    downlink_bps: 1e6,
                    sec_per_local_step: 2.0,
                    city_index: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn config(s: usize, sf: f64) -> ProtocolConfig {
        ProtocolConfig {
            s,
            sf,
            max_rounds: 100,
            shared_init: true,
            init_seed: 3,
        }
    }

    fn aggregator_state(m: &Membership, k: RoundNumber, cfg: &ProtocolConfig) -> NodeState {
        let a = sampler::aggregator(k, cfg.s, m).unwrap();
        NodeState::new(a, cfg.clone())
    }

    fn model(v: f64) -> ModelParameters {
        ModelParameters::new(vec![v, v]).unwrap()
    }

    #[test]
    fn threshold_is_floor() {
        assert_eq!(config(13, 0.8).threshold(), 10);
        assert_eq!(config(10, 0.8).threshold(), 8);
        assert_eq!(config(4, 1.0).threshold(), 4);
        assert!(config(1, 0.5).validate().is_err());
        assert!(config(4, 1.5).validate().is_err());
    }

    #[test]
    fn bootstrap_only_in_first_sample() {
        let m = membership(8);
        let cfg = config(4, 1.0);
        let first = sampler::sample(RoundNumber::FIRST, 4, &m).unwrap();
        for id in m.nodes() {
            let effects = NodeState::new(id.clone(), cfg.clone())
                .bootstrap(&m, &PlusOne)
                .unwrap();
            if first.contains(id) {
                assert!(matches!(&effects[..], [Effect::Send { dst, .. }] if dst == id));
            } else {
                assert!(effects.is_empty());
            }
        }
    }

    #[test]
    fn per_node_init_differs_without_shared_init() {
        let cfg = ProtocolConfig {
            shared_init: false,
            ..config(4, 1.0)
        };
        let a = NodeState::new(NodeId::new("a").unwrap(), cfg.clone());
        let b = NodeState::new(NodeId::new("b").unwrap(), cfg);
        assert_ne!(a.init_seed(), b.init_seed());
        let shared = config(4, 1.0);
        assert_eq!(
            NodeState::new(NodeId::new("a").unwrap(), shared.clone()).init_seed(),
            NodeState::new(NodeId::new("b").unwrap(), shared).init_seed()
        );
    }

    #[test]
    fn train_schedules_compute_then_sends_to_aggregator() {
        let m = membership(8);
        let cfg = config(4, 1.0);
        let k = round(5);
        let me = sampler::sample(k, 4, &m).unwrap().participants[0].clone();
        let mut node = NodeState::new(me, cfg);
        let effects = node.on_train(k, model(0.0), &m, &PlusOne).unwrap();
        let job = match &effects[1] {
            Effect::ScheduleCompute { duration, job } => {
                assert_eq!(*duration, 10.0);
                job.clone()
            }
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(job.model.values(), &[1.0, 1.0]);
        let out = node.on_compute_done(job, &m).unwrap();
        let agg = sampler::aggregator(k, 4, &m).unwrap();
        assert!(
            matches!(&out[..], [Effect::Send { dst, msg: Message::Aggregate { .. }, bytes: 32 }] if *dst == agg)
        );
    }

    #[test]
    fn duplicate_train_ignored_and_past_max_rounds_terminates() {
        let m = membership(4);
        let cfg = ProtocolConfig {
            max_rounds: 2,
            ..config(4, 1.0)
        };
        let mut node = NodeState::new(m.node(0).clone(), cfg);
        node.on_train(round(1), model(0.0), &m, &PlusOne).unwrap();
        let again = node.on_train(round(1), model(0.0), &m, &PlusOne).unwrap();
        assert_eq!(
            again,
            vec![Effect::Metric(ProtocolMetric::DuplicateTrain {
                k: round(1)
            })]
        );
        let done = node.on_train(round(3), model(0.0), &m, &PlusOne).unwrap();
        assert_eq!(done, vec![Effect::Terminal { k: round(3) }]);
    }

    #[test]
    fn aggregation_fires_on_threshold_and_drops_late() {
        let m = membership(20);
        let cfg = config(10, 0.8);
        let k = round(2);
        let participants = sampler::sample(k, 10, &m).unwrap().participants;
        let mut agg = aggregator_state(&m, k, &cfg);
        let mut fired = None;
        for (i, p) in participants.iter().enumerate() {
            let out = agg.on_aggregate(k, model(i as f64), p.clone(), &m).unwrap();
            if i < 7 {
                assert!(out.is_empty());
            } else if i == 7 {
                fired = Some(out);
            } else {
                assert_eq!(
                    out,
                    vec![Effect::Metric(ProtocolMetric::LateModel {
                        k,
                        from: p.clone()
                    })]
                );
            }
        }
        let out = fired.expect("fires on the 8th model");
        match &out[0] {
            Effect::Metric(ProtocolMetric::RoundAggregated {
                model,
                contributors,
                ..
            }) => {
                // mean of 0..8
                assert_eq!(model.values(), &[3.5, 3.5]);
                assert_eq!(contributors.len(), 8);
            }
            other => panic!("unexpected {other:?}"),
        }
        let next = sampler::sample(k.next(), 10, &m).unwrap().participants;
        let sends: Vec<_> = out[1..]
            .iter()
            .map(|e| match e {
                Effect::Send {
                    dst,
                    msg: Message::Train { k: kk, .. },
                    ..
                } => {
                    assert_eq!(*kk, k.next());
                    dst.clone()
                }
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(sends, next);
        assert!(agg.has_aggregated(k));
        assert_eq!(agg.pending(k), 0);
    }

    #[test]
    fn duplicate_sender_and_misroute() {
        let m = membership(8);
        let cfg = config(4, 1.0);
        let k = round(1);
        let mut agg = aggregator_state(&m, k, &cfg);
        let p = sampler::sample(k, 4, &m).unwrap().participants;
        agg.on_aggregate(k, model(1.0), p[0].clone(), &m).unwrap();
        let dup = agg.on_aggregate(k, model(1.0), p[0].clone(), &m).unwrap();
        assert!(matches!(
            dup[0],
            Effect::Metric(ProtocolMetric::DuplicateAggregate { .. })
        ));
        assert_eq!(agg.pending(k), 1);

        let not_agg = m.nodes().iter().find(|n| **n != *agg.me()).unwrap().clone();
        let err = NodeState::new(not_agg, cfg)
            .on_aggregate(k, model(1.0), p[0].clone(), &m)
            .unwrap_err();
        assert!(err.to_string().starts_with("misrouted aggregate"));
    }

    #[test]
    fn last_round_terminates_instead_of_dispatching() {
        let m = membership(4);
        let cfg = ProtocolConfig {
            max_rounds: 1,
            ..config(1, 1.0)
        };
        let k = round(1);
        let mut agg = aggregator_state(&m, k, &cfg);
        let me = agg.me().clone();
        let out = agg.on_aggregate(k, model(2.0), me, &m).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1], Effect::Terminal { k });
    }
}
