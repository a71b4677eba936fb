//! Fluid-flow bandwidth model. Each transfer is limited by its sender's
//! uplink and its receiver's downlink; concurrent transfers share those
//! ports under max-min fairness (progressive filling).

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

/// Remaining bytes below this are treated as delivered.
pub const COMPLETION_EPS_BYTES: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortCapacity {
    pub uplink_bps: f64,
    pub downlink_bps: f64,
}

impl PortCapacity {
    pub fn unlimited() -> Self {
        PortCapacity {
            uplink_bps: f64::INFINITY,
            downlink_bps: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransferId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub id: TransferId,
    pub src: usize,
    pub dst: usize,
    pub total_bytes: f64,
    pub bytes_done: f64,
    pub current_rate: f64,
    pub start_time: f64,
    pub est_completion: f64,
    last_update: f64,
}

impl TransferRecord {
    pub fn remaining(&self) -> f64 {
        (self.total_bytes - self.bytes_done).max(0.0)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Share(f64, usize);

impl Eq for Share {}

impl Ord for Share {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Share {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-min fair rates for `flows` given as `(src, dst)` node indices.
///
/// Port `2i` is node `i`'s uplink and `2i + 1` its downlink. The lowest fair
/// share among ports with unfrozen flows is repeatedly fixed for every flow
/// crossing that port. Shares only grow as flows freeze elsewhere, so stale
/// heap entries are detected by comparing against the current share.
pub fn max_min_rates(ports: &[PortCapacity], flows: &[(usize, usize)]) -> Vec<f64> {
    let n_ports = ports.len() * 2;
    let mut residual: Vec<f64> = ports
        .iter()
        .flat_map(|p| [p.uplink_bps, p.downlink_bps])
        .collect();
    let mut unfrozen = vec![0usize; n_ports];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_ports];
    for (f, &(src, dst)) in flows.iter().enumerate() {
        for p in [2 * src, 2 * dst + 1] {
            unfrozen[p] += 1;
            members[p].push(f);
        }
    }

    let mut rates = vec![f64::NAN; flows.len()];
    let mut frozen = vec![false; flows.len()];
    let mut heap = BinaryHeap::new();
    for p in 0..n_ports {
        if unfrozen[p] > 0 {
            heap.push(Reverse(Share(residual[p] / unfrozen[p] as f64, p)));
        }
    }

    while let Some(Reverse(Share(share, p))) = heap.pop() {
        if unfrozen[p] == 0 {
            continue;
        }
        let current = residual[p] / unfrozen[p] as f64;
        if current.to_bits() != share.to_bits() {
            heap.push(Reverse(Share(current, p)));
            continue;
        }
        for &f in &members[p] {
            if frozen[f] {
                continue;
            }
            frozen[f] = true;
            rates[f] = share;
            let (src, dst) = flows[f];
            for q in [2 * src, 2 * dst + 1] {
                if share.is_finite() {
                    residual[q] = (residual[q] - share).max(0.0);
                }
                unfrozen[q] -= 1;
                if q != p && unfrozen[q] > 0 {
                    heap.push(Reverse(Share(residual[q] / unfrozen[q] as f64, q)));
                }
            }
        }
    }
    rates
}

/// The set of active transfers and their current fair-share rates.
#[derive(Debug, Clone)]
pub struct FairShareNetwork {
    ports: Vec<PortCapacity>,
    active: BTreeMap<TransferId, TransferRecord>,
    next_id: u64,
    now: f64,
}

impl FairShareNetwork {
    pub fn new(ports: Vec<PortCapacity>) -> Self {
        FairShareNetwork {
            ports,
            active: BTreeMap::new(),
            next_id: 0,
            now: 0.0,
        }
    }

    pub fn ports(&self) -> &[PortCapacity] {
        &self.ports
    }

    pub fn active(&self) -> impl Iterator<Item = &TransferRecord> {
        self.active.values()
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_empty()
    }

    /// Starts a transfer at `now` and rebalances every active rate.
    pub fn start(&mut self, src: usize, dst: usize, bytes: f64, now: f64) -> TransferId {
        self.advance(now);
        let id = TransferId(self.next_id);
        self.next_id += 1;
        self.active.insert(
            id,
            TransferRecord {
                id,
                src,
                dst,
                total_bytes: bytes,
                bytes_done: 0.0,
                current_rate: 0.0,
                start_time: now,
                est_completion: f64::INFINITY,
                last_update: now,
            },
        );
        self.recompute_rates();
        id
    }

    /// Moves `bytes_done` of every transfer forward to `now` at current rates.
    pub fn advance(&mut self, now: f64) {
        debug_assert!(now >= self.now);
        for t in self.active.values_mut() {
            let dt = now - t.last_update;
            if dt > 0.0 {
                t.bytes_done = if t.current_rate.is_infinite() {
                    t.total_bytes
                } else {
                    (t.bytes_done + t.current_rate * dt).min(t.total_bytes)
                };
            }
            t.last_update = now;
        }
        self.now = now;
    }

    pub fn recompute_rates(&mut self) {
        let flows: Vec<(usize, usize)> = self.active.values().map(|t| (t.src, t.dst)).collect();
        let rates = max_min_rates(&self.ports, &flows);
        let now = self.now;
        for (t, rate) in self.active.values_mut().zip(rates) {
            t.current_rate = rate;
            t.est_completion = if rate.is_infinite() {
                now
            } else if rate > 0.0 {
                now + t.remaining() / rate
            } else {
                f64::INFINITY
            };
        }
    }

    pub fn next_completion(&self) -> Option<f64> {
        self.active
            .values()
            .map(|t| t.est_completion)
            .min_by(f64::total_cmp)
            .filter(|t| t.is_finite())
    }

    /// Removes transfers finished by `now` and rebalances the rest. Completed
    /// records keep the bytes integrated over their lifetime in `bytes_done`.
    pub fn complete_due(&mut self, now: f64) -> Vec<TransferRecord> {
        self.advance(now);
        let due: Vec<TransferId> = self
            .active
            .values()
            .filter(|t| t.est_completion <= now || t.remaining() <= COMPLETION_EPS_BYTES)
            .map(|t| t.id)
            .collect();
        let done: Vec<TransferRecord> =
            due.iter().filter_map(|id| self.active.remove(id)).collect();
        if !done.is_empty() {
            self.recompute_rates();
        }
        done
    }

    /// Largest relative overshoot of any port's summed rate over its capacity.
    pub fn capacity_violation(&self) -> f64 {
        let mut load = vec![0.0f64; self.ports.len() * 2];
        for t in self.active.values() {
            load[2 * t.src] += t.current_rate;
            load[2 * t.dst + 1] += t.current_rate;
        }
        let mut worst = 0.0f64;
        for (i, p) in self.ports.iter().enumerate() {
            for (l, cap) in [
                (load[2 * i], p.uplink_bps),
                (load[2 * i + 1], p.downlink_bps),
            ] {
                if cap.is_finite() && l > cap {
                    worst = worst.max((l - cap) / cap);
                }
            }
        }
        worst
    }

    /// True when every active transfer crosses at least one saturated port
    /// on which it has a maximal rate (the max-min bottleneck condition).
    pub fn is_max_min_fair(&self, rel_tol: f64) -> bool {
        let mut load = vec![0.0f64; self.ports.len() * 2];
        let mut peak = vec![0.0f64; self.ports.len() * 2];
        for t in self.active.values() {
            for p in [2 * t.src, 2 * t.dst + 1] {
                load[p] += t.current_rate;
                peak[p] = peak[p].max(t.current_rate);
            }
        }
        let cap = |p: usize| {
            let c = self.ports[p / 2];
            if p % 2 == 0 {
                c.uplink_bps
            } else {
                c.downlink_bps
            }
        };
        self.active.values().all(|t| {
            [2 * t.src, 2 * t.dst + 1].into_iter().any(|p| {
                let c = cap(p);
                c.is_finite()
                    && load[p] >= c * (1.0 - rel_tol)
                    && t.current_rate >= peak[p] * (1.0 - rel_tol)
            }) || t.current_rate.is_infinite()
        })
    }
}
