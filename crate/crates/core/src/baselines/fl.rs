//! Centralized federated learning: a server with unlimited bandwidth samples
//! `s` clients per round, pushes the global model, and averages the first
//! `floor(s * sf)` trained models to arrive.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::experiments::metrics::{MetricsLedger, RoundRecord};
use crate::experiments::{ExperimentError, Scenario};
use crate::membership::RoundNumber;
use crate::model::{average_models, model_size_bytes, ModelParameters};
use crate::sampler;
use crate::simnet::{network_for, Control, EventKind, PortCapacity, SimEvent, Simulator, World};

use super::BaselineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlSampling {
    /// Uniform random subset from a seeded RNG.
    Uniform { seed: u64 },
    /// The Plexus hash sampler; used to cross-check the two implementations.
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlConfig {
    pub s: usize,
    pub sf: f64,
    pub init_seed: u64,
    pub sampling: FlSampling,
}

impl FlConfig {
    pub fn threshold(&self) -> usize {
        (self.s as f64 * self.sf).floor() as usize
    }

    pub fn validate(&self, n: usize) -> Result<(), BaselineError> {
        if self.s == 0 || self.s > n {
            return Err(BaselineError::Config(format!(
                "s must be in 1..={n}, got {}",
                self.s
            )));
        }
        if !(self.sf > 0.0 && self.sf <= 1.0) || self.threshold() == 0 {
            return Err(BaselineError::Config(format!(
                "invalid sf {} for s = {}",
                self.sf, self.s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FlPayload {
    /// Server to client.
    Global { k: u64, model: ModelParameters },
    /// Client to server.
    Update { k: u64, model: ModelParameters },
    /// Local training in progress.
    Training { k: u64, model: ModelParameters },
}

#[derive(Debug, Clone)]
pub struct FlRun {
    pub metrics: MetricsLedger,
    pub round_models: Vec<ModelParameters>,
}

struct FlWorld<'s, 'a> {
    scenario: &'s Scenario<'a>,
    config: FlConfig,
    server: usize,
    rng: ChaCha8Rng,
    round: u64,
    received: Vec<ModelParameters>,
    participants: usize,
    round_start: f64,
    compute_secs: Vec<f64>,
    metrics: MetricsLedger,
    round_models: Vec<ModelParameters>,
}

impl FlWorld<'_, '_> {
    fn select(&mut self, k: u64) -> Result<Vec<usize>, ExperimentError> {
        let membership = self.scenario.membership;
        Ok(match self.config.sampling {
            FlSampling::Uniform { .. } => {
                index::sample(&mut self.rng, membership.len(), self.config.s).into_vec()
            }
            FlSampling::Hash => sampler::sample(RoundNumber::new(k)?, self.config.s, membership)?
                .participants
                .iter()
                .map(|id| membership.index_of(id).expect("sampled from membership"))
                .collect(),
        })
    }

    fn start_round(
        &mut self,
        k: u64,
        model: ModelParameters,
        sim: &mut Simulator<FlPayload>,
    ) -> Result<(), ExperimentError> {
        self.round = k;
        self.received.clear();
        self.round_start = sim.now();
        let clients = self.select(k)?;
        self.participants = clients.len();
        let bytes = model_size_bytes(&model);
        for c in clients {
            sim.send(
                self.server,
                c,
                bytes,
                FlPayload::Global {
                    k,
                    model: model.clone(),
                },
            )?;
            self.metrics.add_transfer(bytes);
        }
        Ok(())
    }
}

impl World<FlPayload> for FlWorld<'_, '_> {
    type Error = ExperimentError;

    fn handle(
        &mut self,
        event: SimEvent<FlPayload>,
        sim: &mut Simulator<FlPayload>,
    ) -> Result<Control, ExperimentError> {
        let scenario = self.scenario;
        match event.kind {
            EventKind::Deliver {
                dst,
                msg: FlPayload::Global { k, model },
                ..
            } => {
                let id = scenario.membership.node(dst);
                let trained = scenario.workload.train(id, k, &model)?;
                self.metrics.add_training(dst);
                sim.compute(
                    dst,
                    self.compute_secs[dst],
                    FlPayload::Training { k, model: trained },
                )?;
            }
            EventKind::ComputeDone {
                node,
                job: FlPayload::Training { k, model },
            } => {
                let bytes = model_size_bytes(&model);
                sim.send(node, self.server, bytes, FlPayload::Update { k, model })?;
                self.metrics.add_transfer(bytes);
            }
            EventKind::Deliver {
                msg: FlPayload::Update { k, model },
                ..
            } => {
                if k != self.round || self.received.len() >= self.config.threshold() {
                    self.metrics.add_late(k);
                    return Ok(Control::Continue);
                }
                self.received.push(model);
                if self.received.len() < self.config.threshold() {
                    return Ok(Control::Continue);
                }
                let now = sim.now();
                let global = average_models(&self.received)?;
                self.metrics.complete_round(
                    now,
                    RoundRecord {
                        round: k,
                        duration_s: now - self.round_start,
                        participants: self.participants,
                        models_aggregated: self.received.len(),
                        late_models: 0,
                    },
                );
                if scenario.eval_due(k) {
                    let accuracy = scenario.workload.evaluate(&global)?;
                    self.metrics.record_accuracy(now, k, accuracy, 0.0);
                }
                self.round_models.push(global.clone());
                if k < scenario.budget.max_rounds {
                    self.start_round(k + 1, global, sim)?;
                }
            }
            other => {
                return Err(ExperimentError::Config(format!(
                    "unexpected FL event {other:?}"
                )))
            }
        }
        Ok(Control::Continue)
    }
}

/// Simulates FL. The server is an extra node with unlimited uplink and
/// downlink, placed in city `n mod cities`.
pub fn run_fl(scenario: &Scenario, config: &FlConfig) -> Result<FlRun, ExperimentError> {
    let membership = scenario.membership;
    let n = membership.len();
    config.validate(n)?;
    let mut network = network_for(membership, scenario.latency);
    network.ports.push(PortCapacity::unlimited());
    network.cities.push(n % scenario.latency.len());
    let mut sim = Simulator::new(network);
    let seed = match config.sampling {
        FlSampling::Uniform { seed } => seed,
        FlSampling::Hash => 0,
    };
    let mut world = FlWorld {
        scenario,
        config: config.clone(),
        server: n,
        rng: ChaCha8Rng::seed_from_u64(seed),
        round: 0,
        received: Vec::new(),
        participants: 0,
        round_start: 0.0,
        compute_secs: scenario.compute_secs(),
        metrics: MetricsLedger::new(scenario.compute_secs()),
        round_models: Vec::new(),
    };
    let initial = scenario.workload.init_model(config.init_seed);
    let accuracy = scenario.workload.evaluate(&initial)?;
    world.metrics.record_accuracy(0.0, 0, accuracy, 0.0);
    world.start_round(1, initial, &mut sim)?;
    let summary = sim.run(&mut world, scenario.stop())?;
    let mut metrics = world.metrics;
    metrics.final_time = summary.final_time;
    metrics.snapshot(summary.final_time);
    Ok(FlRun {
        metrics,
        round_models: world.round_models,
    })
}
