//! Oracles shared by the integration and acceptance tests. None of them call
//! into the code paths they check.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use sha2::{Digest, Sha256};

use plexus::experiments::ExperimentConfig;
use plexus::learning::Workload;
use plexus::membership::{Membership, NodeId};
use plexus::model::ModelParameters;
use plexus::simnet::{
    Audit, Control, EventKind, LatencyMatrix, NetworkConfig, PortCapacity, SimError, SimEvent,
    Simulator, StopCondition, World,
};

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

// ---------------------------------------------------------------- sampler

/// Ranks every member by `sha256("<id>|<k>")` and keeps the first `s`;
/// the aggregator is the highest uplink, ties to the smaller id.
pub fn reference_sample(k: u64, s: usize, membership: &Membership) -> (Vec<String>, String) {
    let mut ranked: Vec<([u8; 32], String)> = membership
        .nodes()
        .iter()
        .map(|id| {
            let digest = Sha256::digest(format!("{}|{}", id.as_str(), k).as_bytes());
            (digest.into(), id.as_str().to_string())
        })
        .collect();
    ranked.sort();
    let chosen: Vec<String> = ranked.into_iter().take(s).map(|(_, id)| id).collect();
    let mut best = chosen[0].clone();
    let up = |id: &str| {
        membership
            .profile(&NodeId::new(id).unwrap())
            .unwrap()
            .uplink_bps
    };
    for id in &chosen[1..] {
        if up(id) > up(&best) || (up(id) == up(&best) && *id < best) {
            best = id.clone();
        }
    }
    (chosen, best)
}

// ---------------------------------------------------------------- bandwidth

#[derive(Debug, Clone)]
pub struct Flow {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
    pub start: f64,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub ports: Vec<PortCapacity>,
    pub flows: Vec<Flow>,
}

/// Up to 8 nodes and 12 transfers with start times clustered so most of
/// them overlap.
pub fn random_instance(rng: &mut impl RngCore) -> Instance {
    let n = rng.random_range(2..=8);
    let ports = (0..n)
        .map(|_| {
            let cap = |rng: &mut dyn RngCore| {
                if rng.random::<f64>() < 0.1 {
                    f64::INFINITY
                } else {
                    (rng.random_range(1_000..100_000) as f64).round()
                }
            };
            PortCapacity {
                uplink_bps: cap(rng),
                downlink_bps: cap(rng),
            }
        })
        .collect::<Vec<_>>();
    let m = rng.random_range(1..=12);
    let flows = (0..m)
        .map(|_| {
            let src = rng.random_range(0..n);
            let mut dst = rng.random_range(0..n - 1);
            if dst >= src {
                dst += 1;
            }
            Flow {
                src,
                dst,
                bytes: rng.random_range(1_000..200_000),
                start: (rng.random_range(0..40) as f64) * 0.25,
            }
        })
        .collect();
    // A flow between two unlimited ports would finish instantly; cap one end.
    let mut inst = Instance { ports, flows };
    for f in inst.flows.clone() {
        if inst.ports[f.src].uplink_bps.is_infinite()
            && inst.ports[f.dst].downlink_bps.is_infinite()
        {
            inst.ports[f.src].uplink_bps = 50_000.0;
        }
    }
    inst
}

/// Water-filling: raise every unfrozen flow's rate together until some port
/// saturates, freeze the flows on it, repeat.
pub fn water_fill(ports: &[PortCapacity], flows: &[(usize, usize)]) -> Vec<f64> {
    let mut rate = vec![0.0f64; flows.len()];
    let mut frozen = vec![false; flows.len()];
    let caps: Vec<f64> = ports
        .iter()
        .flat_map(|p| [p.uplink_bps, p.downlink_bps])
        .collect();
    let on = |f: (usize, usize)| [2 * f.0, 2 * f.1 + 1];
    while frozen.iter().any(|f| !f) {
        let mut best: Option<(f64, usize)> = None;
        for (p, &cap) in caps.iter().enumerate() {
            if cap.is_infinite() {
                continue;
            }
            let users: Vec<usize> = (0..flows.len())
                .filter(|&i| on(flows[i]).contains(&p))
                .collect();
            let open = users.iter().filter(|&&i| !frozen[i]).count();
            if open == 0 {
                continue;
            }
            let used: f64 = users.iter().filter(|&&i| frozen[i]).map(|&i| rate[i]).sum();
            let share = (cap - used) / open as f64;
            if best.is_none_or(|(b, _)| share < b) {
                best = Some((share, p));
            }
        }
        let Some((share, port)) = best else {
            for i in 0..flows.len() {
                if !frozen[i] {
                    rate[i] = f64::INFINITY;
                    frozen[i] = true;
                }
            }
            break;
        };
        for i in 0..flows.len() {
            if !frozen[i] && on(flows[i]).contains(&port) {
                rate[i] = share;
                frozen[i] = true;
            }
        }
    }
    rate
}

/// Piecewise-constant fluid integration; returns each flow's finish time.
pub fn fluid_completion_times(inst: &Instance) -> Vec<f64> {
    let m = inst.flows.len();
    let mut remaining: Vec<f64> = inst.flows.iter().map(|f| f.bytes as f64).collect();
    let mut done = vec![f64::NAN; m];
    let mut started = vec![false; m];
    let mut t = 0.0f64;
    loop {
        for (i, f) in inst.flows.iter().enumerate() {
            if !started[i] && f.start <= t {
                started[i] = true;
            }
        }
        let active: Vec<usize> = (0..m).filter(|&i| started[i] && done[i].is_nan()).collect();
        let next_arrival = inst
            .flows
            .iter()
            .enumerate()
            .filter(|(i, _)| !started[*i])
            .map(|(_, f)| f.start)
            .fold(f64::INFINITY, f64::min);
        if active.is_empty() {
            if next_arrival.is_infinite() {
                return done;
            }
            t = next_arrival;
            continue;
        }
        let pairs: Vec<(usize, usize)> = active
            .iter()
            .map(|&i| (inst.flows[i].src, inst.flows[i].dst))
            .collect();
        let rates = water_fill(&inst.ports, &pairs);
        let finish: Vec<f64> = active
            .iter()
            .zip(&rates)
            .map(|(&i, &r)| t + remaining[i] / r)
            .collect();
        let first = finish.iter().copied().fold(f64::INFINITY, f64::min);
        let next = first.min(next_arrival);
        for ((&i, &r), &fin) in active.iter().zip(&rates).zip(&finish) {
            if fin <= next {
                done[i] = fin;
                remaining[i] = 0.0;
            } else {
                remaining[i] -= r * (next - t);
            }
        }
        t = next;
    }
}

struct Replay<'a> {
    flows: &'a [Flow],
    delivered: Vec<f64>,
}

impl World<usize> for Replay<'_> {
    type Error = SimError;

    fn handle(
        &mut self,
        event: SimEvent<usize>,
        sim: &mut Simulator<usize>,
    ) -> Result<Control, SimError> {
        match event.kind {
            EventKind::TimerFire { timer, .. } => {
                let f = &self.flows[timer as usize];
                sim.send(f.src, f.dst, f.bytes, timer as usize)?;
            }
            EventKind::Deliver { msg, .. } => self.delivered[msg] = event.time,
            _ => {}
        }
        Ok(Control::Continue)
    }
}

/// Completion times from the event engine, plus its audit log.
pub fn engine_completion_times(inst: &Instance) -> (Vec<f64>, Audit) {
    let n = inst.ports.len();
    let mut sim = Simulator::new(NetworkConfig {
        ports: inst.ports.clone(),
        cities: vec![0; n],
        latency: LatencyMatrix::zero(),
    })
    .with_audit();
    for (i, f) in inst.flows.iter().enumerate() {
        sim.set_timer(f.src, f.start, i as u64).unwrap();
    }
    let mut world = Replay {
        flows: &inst.flows,
        delivered: vec![f64::NAN; inst.flows.len()],
    };
    sim.run(&mut world, StopCondition::Quiescence).unwrap();
    (world.delivered, sim.audit().unwrap().clone())
}

// ---------------------------------------------------------------- FedAvg

/// Centralized FedAvg: round `k` trains the previous global model on every
/// node of the hash sample and takes the plain coordinate-wise mean.
pub fn reference_fedavg(
    workload: &dyn Workload,
    membership: &Membership,
    s: usize,
    init_seed: u64,
    rounds: u64,
) -> Vec<ModelParameters> {
    let mut global = workload.init_model(init_seed);
    let mut out = Vec::new();
    for k in 1..=rounds {
        let (sample, _) = reference_sample(k, s, membership);
        let trained: Vec<ModelParameters> = sample
            .iter()
            .map(|id| {
                workload
                    .train(&NodeId::new(id.as_str()).unwrap(), k, &global)
                    .unwrap()
            })
            .collect();
        let dim = global.dim();
        let mean: Vec<f64> = (0..dim)
            .map(|c| trained.iter().map(|m| m.values()[c]).sum::<f64>() / trained.len() as f64)
            .collect();
        global = ModelParameters::new(mean).unwrap();
        out.push(global.clone());
    }
    out
}

pub fn max_abs_diff(a: &ModelParameters, b: &ModelParameters) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- determinism

/// Small configs covering every algorithm.
pub fn small_configs() -> Vec<ExperimentConfig> {
    let base = |name: &str, eval_every: f64, algorithm: &str| {
        ExperimentConfig::from_toml(&format!(
            r#"
            name = "{name}"
            n = 24
            s = 6
            eval_every = {eval_every}
            repetitions = 2
            targets = [0.7]
            {algorithm}
            [stop]
            max_virtual_hours = 0.1
            max_rounds = 12
            [dataset]
            kind = "synthetic"
            n_samples = 1200
            d_in = 6
            classes = 4
            separation = 2.5
            [partition]
            kind = "dirichlet"
            alpha = 0.5
            [traces]
            kind = "synthetic"
            cities = 8
            "#
        ))
        .unwrap()
    };
    vec![
        base("det-plexus", 1.0, "[algorithm]\nkind = \"plexus\""),
        base("det-fl", 1.0, "[algorithm]\nkind = \"fl\""),
        base(
            "det-dpsgd",
            20.0,
            "[algorithm]\nkind = \"dpsgd\"\ntopology = { kind = \"regular\", degree = 4, seed = 1 }",
        ),
        base("det-gl", 60.0, "[algorithm]\nkind = \"gl\"\nround_timeout_s = 30.0"),
    ]
}

/// Every file below `dir`, relative path and contents, sorted.
pub fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

// ---------------------------------------------------------------- ledger

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerPrediction {
    pub bytes_total: u64,
    pub train_seconds_total: f64,
    pub trainings: u64,
    pub late_models: u64,
}

/// What a failure-free Plexus run of `rounds` rounds must account for:
/// every participant uploads to the aggregator (free when it is the
/// aggregator), each aggregator pushes the model to the next sample (free
/// to itself), and every participant trains once per round it is sampled.
pub fn predict_ledger(
    membership: &Membership,
    s: usize,
    sf: f64,
    rounds: u64,
    model_bytes: u64,
    compute_secs: &[f64],
) -> LedgerPrediction {
    let threshold = ((s as f64 * sf).floor() as usize).max(1);
    let mut transfers = 0u64;
    let mut counts = vec![0u64; membership.len()];
    let mut previous_aggregator: Option<String> = None;
    for k in 1..=rounds {
        let (sample, agg) = reference_sample(k, s, membership);
        transfers += (sample.len() - 1) as u64;
        if let Some(prev) = &previous_aggregator {
            transfers += sample.iter().filter(|id| *id != prev).count() as u64;
        }
        for id in &sample {
            counts[membership
                .index_of(&NodeId::new(id.as_str()).unwrap())
                .unwrap()] += 1;
        }
        previous_aggregator = Some(agg);
    }
    LedgerPrediction {
        bytes_total: transfers * model_bytes,
        train_seconds_total: counts
            .iter()
            .zip(compute_secs)
            .map(|(&c, &t)| c as f64 * t)
            .sum(),
        trainings: counts.iter().sum(),
        late_models: rounds * (s - threshold) as u64,
    }
}
