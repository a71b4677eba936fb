//! Runs the Plexus state machines of all nodes inside the simulator.

use crate::membership::RoundNumber;
use crate::message::Message;
use crate::model::ModelParameters;
use crate::protocol::{Effect, NodeState, ProtocolConfig, ProtocolMetric, TrainedModel};
use crate::simnet::{network_for, Audit, Control, Delivery, EventKind, SimEvent, Simulator, World};

use super::metrics::{MetricsLedger, RoundRecord};
use super::{ExperimentError, Scenario};

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Msg(Message),
    Job(TrainedModel),
}

/// Result of a simulated Plexus run.
#[derive(Debug, Clone)]
pub struct PlexusRun {
    pub metrics: MetricsLedger,
    /// Aggregated model of every completed round, in round order.
    pub round_models: Vec<ModelParameters>,
    pub audit: Option<Audit>,
}

struct PlexusWorld<'s, 'a> {
    scenario: &'s Scenario<'a>,
    nodes: Vec<NodeState>,
    metrics: MetricsLedger,
    round_models: Vec<ModelParameters>,
    last_aggregation: f64,
    finished: bool,
}

impl PlexusWorld<'_, '_> {
    fn apply(
        &mut self,
        node: usize,
        effects: Vec<Effect>,
        sim: &mut Simulator<Payload>,
    ) -> Result<(), ExperimentError> {
        let membership = self.scenario.membership;
        for effect in effects {
            match effect {
                Effect::Send { dst, msg, bytes } => {
                    let dst = membership
                        .index_of(&dst)
                        .ok_or_else(|| ExperimentError::Config(format!("unknown node {dst}")))?;
                    if sim.send(node, dst, bytes, Payload::Msg(msg))? != Delivery::Local {
                        self.metrics.add_transfer(bytes);
                    }
                }
                Effect::ScheduleCompute { duration, job } => {
                    self.metrics.add_training(node);
                    sim.compute(node, duration, Payload::Job(job))?;
                }
                Effect::Metric(metric) => self.on_metric(metric, sim.now())?,
                Effect::Terminal { .. } => self.finished = true,
            }
        }
        Ok(())
    }

    fn on_metric(&mut self, metric: ProtocolMetric, now: f64) -> Result<(), ExperimentError> {
        match metric {
            ProtocolMetric::TrainingStarted { .. } => {}
            ProtocolMetric::RoundAggregated {
                k,
                model,
                contributors,
                participants,
            } => {
                self.metrics.complete_round(
                    now,
                    RoundRecord {
                        round: k.get(),
                        duration_s: now - self.last_aggregation,
                        participants,
                        models_aggregated: contributors.len(),
                        late_models: 0,
                    },
                );
                self.last_aggregation = now;
                if self.scenario.eval_due(k.get()) {
                    let accuracy = self.scenario.workload.evaluate(&model)?;
                    self.metrics.record_accuracy(now, k.get(), accuracy, 0.0);
                }
                self.round_models.push(model);
            }
            ProtocolMetric::LateModel { k, .. } => self.metrics.add_late(k.get()),
            ProtocolMetric::DuplicateAggregate { .. } | ProtocolMetric::DuplicateTrain { .. } => {
                self.metrics.duplicates += 1
            }
        }
        Ok(())
    }
}

impl World<Payload> for PlexusWorld<'_, '_> {
    type Error = ExperimentError;

    fn handle(
        &mut self,
        event: SimEvent<Payload>,
        sim: &mut Simulator<Payload>,
    ) -> Result<Control, ExperimentError> {
        let scenario = self.scenario;
        let (node, effects) = match event.kind {
            EventKind::Deliver {
                dst,
                msg: Payload::Msg(msg),
                ..
            } => (
                dst,
                self.nodes[dst].on_message(msg, scenario.membership, scenario.workload)?,
            ),
            EventKind::ComputeDone {
                node,
                job: Payload::Job(job),
            } => (
                node,
                self.nodes[node].on_compute_done(job, scenario.membership)?,
            ),
            other => {
                return Err(ExperimentError::Config(format!(
                    "unexpected Plexus event {other:?}"
                )));
            }
        };
        self.apply(node, effects, sim)?;
        Ok(Control::Continue)
    }
}

/// Simulates Plexus until `max_rounds` aggregations (then drains in-flight
/// work so every late model is accounted for) or the virtual-time budget.
pub fn run_plexus(
    scenario: &Scenario,
    config: &ProtocolConfig,
) -> Result<PlexusRun, ExperimentError> {
    config.validate()?;
    let config = ProtocolConfig {
        max_rounds: config.max_rounds.min(scenario.budget.max_rounds),
        ..config.clone()
    };
    let membership = scenario.membership;
    let mut sim = Simulator::new(network_for(membership, scenario.latency));
    if scenario.audit {
        sim = sim.with_audit();
    }
    let mut world = PlexusWorld {
        scenario,
        nodes: membership
            .nodes()
            .iter()
            .map(|id| NodeState::new(id.clone(), config.clone()))
            .collect(),
        metrics: MetricsLedger::new(scenario.compute_secs()),
        round_models: Vec::new(),
        last_aggregation: 0.0,
        finished: false,
    };

    let first = crate::sampler::sample(RoundNumber::FIRST, config.s, membership)?;
    let initial = scenario
        .workload
        .init_model(NodeState::new(first.participants[0].clone(), config.clone()).init_seed());
    let accuracy = scenario.workload.evaluate(&initial)?;
    world.metrics.record_accuracy(0.0, 0, accuracy, 0.0);

    for i in 0..membership.len() {
        let effects = world.nodes[i].bootstrap(membership, scenario.workload)?;
        world.apply(i, effects, &mut sim)?;
    }
    let summary = sim.run(&mut world, scenario.stop())?;
    let mut metrics = world.metrics;
    metrics.final_time = summary.final_time;
    metrics.snapshot(summary.final_time);
    Ok(PlexusRun {
        metrics,
        round_models: world.round_models,
        audit: sim.audit().cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Budget;
    use crate::learning::{LearningError, Workload};
    use crate::membership::{DeviceProfile, Membership, NodeId};
    use crate::model::model_size_bytes;
    use crate::sampler;
    use crate::simnet::LatencyMatrix;

    struct Shift;

    impl Workload for Shift {
        fn init_model(&self, _: u64) -> ModelParameters {
            ModelParameters::zeros(3)
        }

        fn train(
            &self,
            node: &NodeId,
            key: u64,
            m: &ModelParameters,
        ) -> Result<ModelParameters, LearningError> {
            let bump = node.as_str().len() as f64 + key as f64 * 0.5;
            Ok(ModelParameters::new(m.values().iter().map(|v| v + bump).collect()).unwrap())
        }

        fn local_steps(&self) -> u32 {
            5
        }

        fn evaluate(&self, m: &ModelParameters) -> Result<f64, LearningError> {
            Ok((m.values()[0] / 100.0).min(1.0))
        }
    }

    fn membership(n: usize) -> Membership {
        Membership::new(
            (0..n)
                .map(|i| DeviceProfile {
                    node: NodeId::new(format!("n{i}")).unwrap(),
                    uplink_bps: 100.0 + 10.0 * i as f64,
                    downlink_bps: 300.0,
                    sec_per_local_step: 0.5 + 0.1 * i as f64,
                    city_index: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn scenario<'a>(
        m: &'a Membership,
        lat: &'a LatencyMatrix,
        w: &'a Shift,
        rounds: u64,
    ) -> Scenario<'a> {
        Scenario {
            membership: m,
            latency: lat,
            workload: w,
            budget: Budget::rounds(rounds),
            eval_every: 1.0,
            audit: true,
        }
    }

    #[test]
    fn eight_nodes_sample_four_ledger_matches_closed_form() {
        let m = membership(8);
        let lat = LatencyMatrix::single(40.0);
        let cfg = ProtocolConfig {
            s: 4,
            sf: 1.0,
            max_rounds: 10,
            shared_init: true,
            init_seed: 1,
        };
        let run = run_plexus(&scenario(&m, &lat, &Shift, 10), &cfg).unwrap();
        let metrics = &run.metrics;
        assert_eq!(metrics.rounds.len(), 10);
        assert!(metrics
            .rounds
            .iter()
            .all(|r| r.models_aggregated == 4 && r.late_models == 0));

        let size = model_size_bytes(&ModelParameters::zeros(3));
        let mut transfers = 0;
        let mut prev_agg: Option<NodeId> = None;
        for k in 1..=10 {
            let s = sampler::sample_with_aggregator(RoundNumber::new(k).unwrap(), 4, &m).unwrap();
            let agg = s.aggregator.clone().unwrap();
            transfers += s.participants.iter().filter(|p| **p != agg).count() as u64;
            if let Some(prev) = &prev_agg {
                transfers += s.participants.iter().filter(|p| *p != prev).count() as u64;
            }
            prev_agg = Some(agg);
        }
        assert_eq!(metrics.bytes_total, size * transfers);
        assert_eq!(metrics.transfers, transfers);
        assert_eq!(metrics.trainings(), 40);

        let audit = run.audit.unwrap();
        assert_eq!(audit.fairness_violations, 0);
        assert!(audit.max_capacity_violation < 1e-9);
    }

    #[test]
    fn late_models_drained_after_last_round() {
        let m = membership(20);
        let lat = LatencyMatrix::single(10.0);
        let cfg = ProtocolConfig {
            s: 10,
            sf: 0.8,
            max_rounds: 6,
            shared_init: true,
            init_seed: 1,
        };
        let run = run_plexus(&scenario(&m, &lat, &Shift, 6), &cfg).unwrap();
        assert_eq!(run.metrics.late_models, 12);
        assert!(run.metrics.rounds.iter().all(|r| r.late_models == 2));
        assert_eq!(run.metrics.trainings(), 60);
        assert_eq!(run.round_models.len(), 6);
    }

    #[test]
    fn virtual_time_budget_stops_early() {
        let m = membership(8);
        let lat = LatencyMatrix::single(10.0);
        let mut sc = scenario(&m, &lat, &Shift, 1000);
        sc.budget.max_virtual_secs = 30.0;
        let cfg = ProtocolConfig {
            s: 4,
            sf: 1.0,
            max_rounds: 1000,
            shared_init: true,
            init_seed: 1,
        };
        let run = run_plexus(&sc, &cfg).unwrap();
        assert!(run.metrics.rounds.len() < 1000);
        assert_eq!(run.metrics.final_time, 30.0);
    }
}
