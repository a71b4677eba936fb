//! Deterministic discrete-event loop over virtual time.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use super::bandwidth::{FairShareNetwork, PortCapacity, TransferId, TransferRecord};
use super::latency::LatencyMatrix;
use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind<M> {
    Deliver {
        src: usize,
        dst: usize,
        msg: M,
        bytes: u64,
    },
    ComputeDone {
        node: usize,
        job: M,
    },
    TimerFire {
        node: usize,
        timer: u64,
    },
    TransferRateRecompute {
        generation: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<M> {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind<M>,
}

struct Queued<M>(SimEvent<M>);

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<M> Eq for Queued<M> {}

impl<M> Ord for Queued<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .time
            .total_cmp(&other.0.time)
            .then(self.0.seq.cmp(&other.0.seq))
    }
}

impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// How a `send` was routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// `src == dst`: delivered now at no network cost.
    Local,
    /// Zero-byte payload: latency only.
    LatencyOnly,
    /// Shares bandwidth with other transfers, then pays latency.
    Transfer(TransferId),
}

/// Static network description: one port pair and one city per node index.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub ports: Vec<PortCapacity>,
    pub cities: Vec<usize>,
    pub latency: LatencyMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    Quiescence,
    Until(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub final_time: f64,
    pub events: u64,
}

/// Owner of simulated state; receives every user-visible event.
pub trait World<M> {
    type Error: From<SimError>;

    fn handle(
        &mut self,
        event: SimEvent<M>,
        sim: &mut Simulator<M>,
    ) -> Result<Control, Self::Error>;
}

/// A transfer as observed by the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedTransfer {
    pub id: TransferId,
    pub src: usize,
    pub dst: usize,
    pub bytes: f64,
    pub start: f64,
    pub completed: f64,
}

/// Invariant checks recorded while running; enabled with `Simulator::audit`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    pub max_capacity_violation: f64,
    pub max_conservation_error: f64,
    pub fairness_violations: u64,
    pub completions: Vec<CompletedTransfer>,
}

pub struct Simulator<M> {
    now: f64,
    seq: u64,
    queue: BinaryHeap<Reverse<Queued<M>>>,
    network: FairShareNetwork,
    cities: Vec<usize>,
    latency: LatencyMatrix,
    in_flight: BTreeMap<TransferId, M>,
    generation: u64,
    events: u64,
    audit: Option<Audit>,
}

impl<M> Simulator<M> {
    pub fn new(config: NetworkConfig) -> Self {
        assert_eq!(config.ports.len(), config.cities.len(), "one city per node");
        Simulator {
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            network: FairShareNetwork::new(config.ports),
            cities: config.cities,
            latency: config.latency,
            in_flight: BTreeMap::new(),
            generation: 0,
            events: 0,
            audit: None,
        }
    }

    pub fn with_audit(mut self) -> Self {
        self.audit = Some(Audit::default());
        self
    }

    pub fn audit(&self) -> Option<&Audit> {
        self.audit.as_ref()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn node_count(&self) -> usize {
        self.cities.len()
    }

    pub fn network(&self) -> &FairShareNetwork {
        &self.network
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule_at(&mut self, time: f64, kind: EventKind<M>) -> Result<(), SimError> {
        if !(time >= self.now) {
            return Err(SimError::EventInPast {
                at: time,
                now: self.now,
            });
        }
        let seq = self.seq;
        self.seq += 1;
        self.queue
            .push(Reverse(Queued(SimEvent { time, seq, kind })));
        Ok(())
    }

    pub fn one_way_latency(&self, src: usize, dst: usize) -> Result<f64, SimError> {
        let (a, b) = (self.city(src)?, self.city(dst)?);
        Ok(self.latency.one_way_seconds(a, b))
    }

    fn city(&self, node: usize) -> Result<usize, SimError> {
        self.cities
            .get(node)
            .copied()
            .ok_or(SimError::UnknownNode(node))
    }

    /// Sends `bytes` from `src` to `dst`. Delivery happens after the transfer
    /// finishes under fair sharing plus the one-way latency between cities.
    pub fn send(
        &mut self,
        src: usize,
        dst: usize,
        bytes: u64,
        msg: M,
    ) -> Result<Delivery, SimError> {
        let latency = self.one_way_latency(src, dst)?;
        if src == dst {
            self.schedule_at(
                self.now,
                EventKind::Deliver {
                    src,
                    dst,
                    msg,
                    bytes,
                },
            )?;
            return Ok(Delivery::Local);
        }
        if bytes == 0 {
            self.schedule_at(
                self.now + latency,
                EventKind::Deliver {
                    src,
                    dst,
                    msg,
                    bytes,
                },
            )?;
            return Ok(Delivery::LatencyOnly);
        }
        let id = self.network.start(src, dst, bytes as f64, self.now);
        self.in_flight.insert(id, msg);
        self.after_rate_change()?;
        Ok(Delivery::Transfer(id))
    }

    pub fn compute(&mut self, node: usize, duration: f64, job: M) -> Result<(), SimError> {
        self.city(node)?;
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(SimError::InvalidDuration(duration));
        }
        self.schedule_at(self.now + duration, EventKind::ComputeDone { node, job })
    }

    pub fn set_timer(&mut self, node: usize, delay: f64, timer: u64) -> Result<(), SimError> {
        self.city(node)?;
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(SimError::InvalidDuration(delay));
        }
        self.schedule_at(self.now + delay, EventKind::TimerFire { node, timer })
    }

    fn after_rate_change(&mut self) -> Result<(), SimError> {
        if let Some(audit) = self.audit.as_mut() {
            audit.max_capacity_violation = audit
                .max_capacity_violation
                .max(self.network.capacity_violation());
            if !self.network.is_max_min_fair(1e-9) {
                audit.fairness_violations += 1;
            }
        }
        self.generation += 1;
        if let Some(t) = self.network.next_completion() {
            let generation = self.generation;
            self.schedule_at(
                t.max(self.now),
                EventKind::TransferRateRecompute { generation },
            )?;
        }
        Ok(())
    }

    fn on_network_wakeup(&mut self) -> Result<(), SimError> {
        let done = self.network.complete_due(self.now);
        for t in &done {
            self.record_completion(t);
            let msg = self
                .in_flight
                .remove(&t.id)
                .expect("every transfer carries a payload");
            let latency = self.one_way_latency(t.src, t.dst)?;
            self.schedule_at(
                self.now + latency,
                EventKind::Deliver {
                    src: t.src,
                    dst: t.dst,
                    msg,
                    bytes: t.total_bytes as u64,
                },
            )?;
        }
        self.after_rate_change()
    }

    fn record_completion(&mut self, t: &TransferRecord) {
        let now = self.now;
        if let Some(audit) = self.audit.as_mut() {
            audit.max_conservation_error = audit
                .max_conservation_error
                .max((t.total_bytes - t.bytes_done).abs());
            audit.completions.push(CompletedTransfer {
                id: t.id,
                src: t.src,
                dst: t.dst,
                bytes: t.total_bytes,
                start: t.start_time,
                completed: now,
            });
        }
    }

    /// Pops the next user-visible event, handling bandwidth bookkeeping
    /// internally.
    pub fn next_event(&mut self, stop: StopCondition) -> Result<Option<SimEvent<M>>, SimError> {
        loop {
            let Some(Reverse(Queued(head))) = self.queue.peek() else {
                return Ok(None);
            };
            if let StopCondition::Until(limit) = stop {
                if head.time > limit {
                    self.now = self.now.max(limit);
                    return Ok(None);
                }
            }
            let Reverse(Queued(event)) = self.queue.pop().expect("peeked");
            debug_assert!(event.time >= self.now);
            self.now = event.time;
            match event.kind {
                EventKind::TransferRateRecompute { generation } => {
                    if generation == self.generation {
                        self.on_network_wakeup()?;
                    }
                }
                _ => {
                    self.events += 1;
                    return Ok(Some(event));
                }
            }
        }
    }

    /// Dispatches events to `world` until the stop condition or quiescence.
    pub fn run<W: World<M>>(
        &mut self,
        world: &mut W,
        stop: StopCondition,
    ) -> Result<RunSummary, W::Error> {
        while let Some(event) = self.next_event(stop)? {
            if world.handle(event, self)? == Control::Stop {
                break;
            }
        }
        Ok(RunSummary {
            final_time: self.now,
            events: self.events,
        })
    }
}
