//! Synchronous D-PSGD: every round all nodes train, send their model to
//! their topology neighbors, wait for every node to finish the exchange,
//! then mix what they received.

use serde::{Deserialize, Serialize};

use crate::experiments::metrics::{MetricsLedger, RoundRecord};
use crate::experiments::{evaluate_population, ExperimentError, Scenario};
use crate::model::{model_size_bytes, ModelParameters};
use crate::simnet::{network_for, Control, EventKind, SimEvent, Simulator, World};

use super::{mix, Topology, TopologyKind};

const EVAL_TIMER: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpsgdConfig {
    pub topology: TopologyKind,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum DpsgdPayload {
    Model { k: u64, model: ModelParameters },
    Training { k: u64, model: ModelParameters },
}

#[derive(Debug, Clone)]
pub struct DpsgdRun {
    pub metrics: MetricsLedger,
    pub models: Vec<ModelParameters>,
    /// `(start, end)` virtual time of every completed round.
    pub round_spans: Vec<(f64, f64)>,
}

struct DpsgdWorld<'s, 'a> {
    scenario: &'s Scenario<'a>,
    topology: Topology,
    compute_secs: Vec<f64>,
    models: Vec<ModelParameters>,
    trained: Vec<Option<ModelParameters>>,
    inbox: Vec<Vec<ModelParameters>>,
    ready: usize,
    round: u64,
    round_start: f64,
    round_spans: Vec<(f64, f64)>,
    metrics: MetricsLedger,
}

impl DpsgdWorld<'_, '_> {
    fn start_round(
        &mut self,
        k: u64,
        sim: &mut Simulator<DpsgdPayload>,
    ) -> Result<(), ExperimentError> {
        self.round = k;
        self.round_start = sim.now();
        self.ready = 0;
        for i in 0..self.models.len() {
            let id = self.scenario.membership.node(i);
            let trained = self.scenario.workload.train(id, k, &self.models[i])?;
            self.metrics.add_training(i);
            sim.compute(
                i,
                self.compute_secs[i],
                DpsgdPayload::Training { k, model: trained },
            )?;
        }
        Ok(())
    }

    fn is_ready(&self, i: usize) -> bool {
        self.trained[i].is_some() && self.inbox[i].len() == self.topology.in_degree(i)
    }

    fn mark_progress(
        &mut self,
        i: usize,
        sim: &mut Simulator<DpsgdPayload>,
    ) -> Result<Control, ExperimentError> {
        if !self.is_ready(i) {
            return Ok(Control::Continue);
        }
        self.ready += 1;
        if self.ready < self.models.len() {
            return Ok(Control::Continue);
        }
        // Barrier: every node has its own trained model and all neighbor models.
        for i in 0..self.models.len() {
            let own = self.trained[i].take().expect("ready node has trained");
            let received = std::mem::take(&mut self.inbox[i]);
            self.models[i] = mix(&own, &received)?;
        }
        let now = sim.now();
        let n = self.models.len();
        self.metrics.complete_round(
            now,
            RoundRecord {
                round: self.round,
                duration_s: now - self.round_start,
                participants: n,
                models_aggregated: n,
                late_models: 0,
            },
        );
        self.round_spans.push((self.round_start, now));
        if self.round >= self.scenario.budget.max_rounds {
            return Ok(Control::Stop);
        }
        self.start_round(self.round + 1, sim)?;
        Ok(Control::Continue)
    }

    fn evaluate(&mut self, now: f64) -> Result<(), ExperimentError> {
        let (mean, std) = evaluate_population(self.scenario.workload, &self.models)?;
        let completed = self.round_spans.len() as u64;
        self.metrics.record_accuracy(now, completed, mean, std);
        Ok(())
    }
}

impl World<DpsgdPayload> for DpsgdWorld<'_, '_> {
    type Error = ExperimentError;

    fn handle(
        &mut self,
        event: SimEvent<DpsgdPayload>,
        sim: &mut Simulator<DpsgdPayload>,
    ) -> Result<Control, ExperimentError> {
        match event.kind {
            EventKind::ComputeDone {
                node,
                job: DpsgdPayload::Training { k, model },
            } => {
                let bytes = model_size_bytes(&model);
                for j in self.topology.out_neighbors(node, k) {
                    sim.send(
                        node,
                        j,
                        bytes,
                        DpsgdPayload::Model {
                            k,
                            model: model.clone(),
                        },
                    )?;
                    self.metrics.add_transfer(bytes);
                }
                self.trained[node] = Some(model);
                self.mark_progress(node, sim)
            }
            EventKind::Deliver {
                dst,
                msg: DpsgdPayload::Model { k, model },
                ..
            } => {
                debug_assert_eq!(k, self.round, "no node runs ahead of the barrier");
                self.inbox[dst].push(model);
                self.mark_progress(dst, sim)
            }
            EventKind::TimerFire {
                timer: EVAL_TIMER, ..
            } => {
                let now = sim.now();
                self.evaluate(now)?;
                sim.set_timer(0, self.scenario.eval_every, EVAL_TIMER)?;
                Ok(Control::Continue)
            }
            other => Err(ExperimentError::Config(format!(
                "unexpected D-PSGD event {other:?}"
            ))),
        }
    }
}

/// Simulates D-PSGD. All nodes start from the model seeded by `init_seed`;
/// all node models are evaluated every `eval_every` virtual seconds and once
/// more when the run ends.
pub fn run_dpsgd(scenario: &Scenario, config: &DpsgdConfig) -> Result<DpsgdRun, ExperimentError> {
    let membership = scenario.membership;
    let n = membership.len();
    let topology = Topology::build(config.topology, n)?;
    if !(scenario.eval_every > 0.0) {
        return Err(ExperimentError::Config(
            "eval_every must be positive".into(),
        ));
    }
    let mut sim = Simulator::new(network_for(membership, scenario.latency));
    if scenario.audit {
        sim = sim.with_audit();
    }
    let initial = scenario.workload.init_model(config.init_seed);
    let mut world = DpsgdWorld {
        scenario,
        topology,
        compute_secs: scenario.compute_secs(),
        models: vec![initial; n],
        trained: vec![None; n],
        inbox: vec![Vec::new(); n],
        ready: 0,
        round: 0,
        round_start: 0.0,
        round_spans: Vec::new(),
        metrics: MetricsLedger::new(scenario.compute_secs()),
    };
    world.evaluate(0.0)?;
    sim.set_timer(0, scenario.eval_every, EVAL_TIMER)?;
    if scenario.budget.max_rounds > 0 {
        world.start_round(1, &mut sim)?;
    }
    let summary = sim.run(&mut world, scenario.stop())?;
    let end = summary.final_time;
    if world.metrics.last_accuracy().map(|p| p.time_s) != Some(end) {
        world.evaluate(end)?;
    }
    let mut metrics = world.metrics;
    metrics.final_time = end;
    metrics.snapshot(end);
    Ok(DpsgdRun {
        metrics,
        models: world.models,
        round_spans: world.round_spans,
    })
}
