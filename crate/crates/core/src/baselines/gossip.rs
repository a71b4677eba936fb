//! Asynchronous Gossip Learning: on every timeout tick a node pushes its
//! model to a uniformly random peer; a receiver merges it age-weighted with
//! its own model and trains. Models arriving during training are queued.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::experiments::metrics::MetricsLedger;
use crate::experiments::{evaluate_population, ExperimentError, Scenario};
use crate::message::Message;
use crate::model::ModelParameters;
use crate::simnet::{network_for, Control, EventKind, SimEvent, Simulator, World};

use super::{gl_merge, BaselineError};

const TICK_TIMER: u64 = 0;
const EVAL_TIMER: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GossipConfig {
    pub round_timeout_s: f64,
    pub init_seed: u64,
    /// Seeds tick phases and peer choices.
    pub seed: u64,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig {
            round_timeout_s: 60.0,
            init_seed: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum GossipPayload {
    Msg(Message),
    Training(ModelParameters),
}

#[derive(Debug, Clone)]
pub struct GossipRun {
    pub metrics: MetricsLedger,
    pub models: Vec<ModelParameters>,
    /// `sends[i][j]`: models node `i` pushed to node `j`.
    pub sends: Vec<Vec<u64>>,
}

struct GossipWorld<'s, 'a> {
    scenario: &'s Scenario<'a>,
    config: GossipConfig,
    rng: ChaCha8Rng,
    compute_secs: Vec<f64>,
    models: Vec<ModelParameters>,
    busy: Vec<bool>,
    queues: Vec<VecDeque<ModelParameters>>,
    invocations: Vec<u64>,
    sends: Vec<Vec<u64>>,
    metrics: MetricsLedger,
}

impl GossipWorld<'_, '_> {
    fn merge_and_train(
        &mut self,
        i: usize,
        remote: ModelParameters,
        sim: &mut Simulator<GossipPayload>,
    ) -> Result<(), ExperimentError> {
        let merged = gl_merge(&self.models[i], &remote).map_err(BaselineError::from)?;
        self.invocations[i] += 1;
        let id = self.scenario.membership.node(i);
        let trained = self
            .scenario
            .workload
            .train(id, self.invocations[i], &merged)?;
        self.metrics.add_training(i);
        self.busy[i] = true;
        sim.compute(i, self.compute_secs[i], GossipPayload::Training(trained))?;
        Ok(())
    }

    fn evaluate(&mut self, now: f64) -> Result<(), ExperimentError> {
        let (mean, std) = evaluate_population(self.scenario.workload, &self.models)?;
        let periods = (now / self.config.round_timeout_s).floor() as u64;
        self.metrics.record_accuracy(now, periods, mean, std);
        Ok(())
    }
}

impl World<GossipPayload> for GossipWorld<'_, '_> {
    type Error = ExperimentError;

    fn handle(
        &mut self,
        event: SimEvent<GossipPayload>,
        sim: &mut Simulator<GossipPayload>,
    ) -> Result<Control, ExperimentError> {
        let n = self.models.len();
        match event.kind {
            EventKind::TimerFire {
                node,
                timer: TICK_TIMER,
            } => {
                let mut peer = self.rng.random_range(0..n - 1);
                if peer >= node {
                    peer += 1;
                }
                let msg = Message::GossipModel {
                    model: self.models[node].clone(),
                    from: self.scenario.membership.node(node).clone(),
                };
                let bytes = msg.wire_bytes();
                sim.send(node, peer, bytes, GossipPayload::Msg(msg))?;
                self.metrics.add_transfer(bytes);
                self.sends[node][peer] += 1;
                sim.set_timer(node, self.config.round_timeout_s, TICK_TIMER)?;
            }
            EventKind::TimerFire {
                timer: EVAL_TIMER, ..
            } => {
                let now = sim.now();
                self.evaluate(now)?;
                sim.set_timer(0, self.scenario.eval_every, EVAL_TIMER)?;
            }
            EventKind::Deliver {
                dst,
                msg: GossipPayload::Msg(Message::GossipModel { model, .. }),
                ..
            } => {
                if self.busy[dst] {
                    self.queues[dst].push_back(model);
                } else {
                    self.merge_and_train(dst, model, sim)?;
                }
            }
            EventKind::ComputeDone {
                node,
                job: GossipPayload::Training(model),
            } => {
                self.models[node] = model;
                self.busy[node] = false;
                if let Some(next) = self.queues[node].pop_front() {
                    self.merge_and_train(node, next, sim)?;
                }
            }
            other => {
                return Err(ExperimentError::Config(format!(
                    "unexpected gossip event {other:?}"
                )))
            }
        }
        Ok(Control::Continue)
    }
}

/// Simulates Gossip Learning until the virtual-time budget, or
/// `max_rounds` timeout periods if that is earlier. Every node's first tick
/// is at a uniformly random phase within the first period.
pub fn run_gossip(
    scenario: &Scenario,
    config: &GossipConfig,
) -> Result<GossipRun, ExperimentError> {
    let membership = scenario.membership;
    let n = membership.len();
    if n < 2 {
        return Err(BaselineError::Config("gossip needs at least two nodes".into()).into());
    }
    if !(config.round_timeout_s > 0.0 && config.round_timeout_s.is_finite()) {
        return Err(BaselineError::Config("round timeout must be positive".into()).into());
    }
    if !(scenario.eval_every > 0.0) {
        return Err(ExperimentError::Config(
            "eval_every must be positive".into(),
        ));
    }
    let horizon = scenario
        .budget
        .max_virtual_secs
        .min(scenario.budget.max_rounds as f64 * config.round_timeout_s);
    if !horizon.is_finite() {
        return Err(ExperimentError::Config(
            "gossip runs need a finite budget".into(),
        ));
    }
    let mut sim = Simulator::new(network_for(membership, scenario.latency));
    if scenario.audit {
        sim = sim.with_audit();
    }
    let initial = scenario.workload.init_model(config.init_seed);
    let mut world = GossipWorld {
        scenario,
        config: config.clone(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        compute_secs: scenario.compute_secs(),
        models: vec![initial; n],
        busy: vec![false; n],
        queues: vec![VecDeque::new(); n],
        invocations: vec![0; n],
        sends: vec![vec![0; n]; n],
        metrics: MetricsLedger::new(scenario.compute_secs()),
    };
    world.evaluate(0.0)?;
    for i in 0..n {
        let phase = world.rng.random_range(0.0..config.round_timeout_s);
        sim.set_timer(i, phase, TICK_TIMER)?;
    }
    sim.set_timer(0, scenario.eval_every, EVAL_TIMER)?;
    let summary = sim.run(&mut world, crate::simnet::StopCondition::Until(horizon))?;
    let end = summary.final_time;
    if world.metrics.last_accuracy().map(|p| p.time_s) != Some(end) {
        world.evaluate(end)?;
    }
    let mut metrics = world.metrics;
    metrics.final_time = end;
    metrics.snapshot(end);
    Ok(GossipRun {
        metrics,
        models: world.models,
        sends: world.sends,
    })
}
