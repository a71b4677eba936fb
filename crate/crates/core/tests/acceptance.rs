//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (no libtest harness) so the verdicts always reach stdout.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use plexus::experiments::runner::ExperimentSummary;
use plexus::experiments::{run_experiment, run_plexus, sweep, Budget, ExperimentConfig, Scenario};
use plexus::learning::{
    partition, synth_dataset, FederatedTask, ModelFamily, PartitionScheme, SynthSpec, TrainerConfig,
};
use plexus::membership::{Membership, RoundNumber};
use plexus::model::model_size_bytes;
use plexus::protocol::ProtocolConfig;
use plexus::sampler::sample_with_aggregator;
use plexus::simnet::{synthesize_profiles, LatencyMatrix, ProfileSpread};

type Verdict = Result<String, String>;

fn check(ok: bool, what: String) -> Result<String, String> {
    if ok {
        Ok(what)
    } else {
        Err(what)
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Verdict {
    check(
        elapsed.as_secs_f64() < limit_s as f64,
        format!("runtime {:.1} s (limit {limit_s} s)", elapsed.as_secs_f64()),
    )
}

fn all(parts: Vec<Verdict>) -> Verdict {
    let ok = parts.iter().all(|p| p.is_ok());
    let text = parts
        .into_iter()
        .map(|p| match p {
            Ok(s) => s,
            Err(s) => format!("FAILED {s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    check(ok, text)
}

/// Sampler equivalence and uniformity.
fn criterion_1() -> Verdict {
    let start = Instant::now();
    let (n, s, rounds) = (100usize, 13usize, 10_000u64);
    let base = Membership::new(synthesize_profiles(n, &ProfileSpread::default(), 17)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // Every node holds its own, differently ordered, view of the membership.
    let views: Vec<Membership> = (0..n)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            base.reordered(&order)
        })
        .collect();
    let mut selected = vec![0u64; n];
    let mut disagreements = 0u64;
    for k in 1..=rounds {
        let k = RoundNumber::new(k).unwrap();
        let reference = sample_with_aggregator(k, s, &base).unwrap();
        for view in &views {
            if sample_with_aggregator(k, s, view).unwrap() != reference {
                disagreements += 1;
            }
        }
        for p in &reference.participants {
            selected[base.index_of(p).unwrap()] += 1;
        }
    }
    let freq: Vec<f64> = selected.iter().map(|&c| c as f64 / rounds as f64).collect();
    let (lo, hi) = freq
        .iter()
        .fold((1.0f64, 0.0f64), |(a, b), &f| (a.min(f), b.max(f)));
    all(vec![
        check(
            disagreements == 0,
            format!("{disagreements} disagreeing views over {rounds} rounds x {n} nodes"),
        ),
        check(
            lo >= 0.10 && hi <= 0.16,
            format!("selection frequency in [{lo:.4}, {hi:.4}]"),
        ),
        within(start.elapsed(), 30),
    ])
}

/// Plexus with sf = 1 against centralized FedAvg.
fn criterion_2() -> Verdict {
    let start = Instant::now();
    let membership =
        Membership::new(synthesize_profiles(32, &ProfileSpread::default(), 23)).unwrap();
    let data = synth_dataset(&SynthSpec {
        n_samples: 6400,
        d_in: 16,
        classes: 10,
        separation: 3.0,
        ..SynthSpec::default()
    })
    .unwrap();
    let task = FederatedTask {
        family: ModelFamily::Linear {
            d_in: 16,
            classes: 10,
        },
        trainer: TrainerConfig::default(),
        shards: partition(
            &data.train,
            &membership,
            PartitionScheme::Dirichlet { alpha: 0.5 },
            4,
        )
        .unwrap(),
        test: data.test,
    };
    let latency = LatencyMatrix::zero();
    let scenario = Scenario {
        membership: &membership,
        latency: &latency,
        workload: &task,
        budget: Budget::rounds(20),
        eval_every: 1.0,
        audit: false,
    };
    let cfg = ProtocolConfig {
        s: 8,
        sf: 1.0,
        max_rounds: 20,
        shared_init: true,
        init_seed: 99,
    };
    let run = run_plexus(&scenario, &cfg).unwrap();
    let reference = common::reference_fedavg(&task, &membership, 8, 99, 20);
    let worst = run
        .round_models
        .iter()
        .zip(&reference)
        .map(|(a, b)| common::max_abs_diff(a, b))
        .fold(0.0, f64::max);
    all(vec![
        check(
            run.round_models.len() == 20,
            format!("{} rounds", run.round_models.len()),
        ),
        check(
            worst <= 1e-12,
            format!("max per-coordinate difference {worst:.2e}"),
        ),
        within(start.elapsed(), 60),
    ])
}

/// Event engine against an independent fluid max-min integrator.
fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut capacity, mut conservation, mut unfair, mut transfers) =
        (0.0f64, 0.0f64, 0.0f64, 0u64, 0);
    for _ in 0..200 {
        let inst = common::random_instance(&mut rng);
        let expected = common::fluid_completion_times(&inst);
        let (got, audit) = common::engine_completion_times(&inst);
        for (e, g) in expected.iter().zip(&got) {
            worst = worst.max((e - g).abs());
        }
        transfers += inst.flows.len();
        capacity = capacity.max(audit.max_capacity_violation);
        conservation = conservation.max(audit.max_conservation_error);
        unfair += audit.fairness_violations;
    }
    all(vec![
        check(
            worst <= 1e-9,
            format!("{transfers} transfers, max completion error {worst:.2e} s"),
        ),
        check(
            capacity <= 1e-9,
            format!("capacity overshoot {capacity:.1e}"),
        ),
        check(
            conservation <= 1e-6,
            format!("conservation error {conservation:.1e} B"),
        ),
        check(unfair == 0, format!("{unfair} non-max-min allocations")),
        within(start.elapsed(), 60),
    ])
}

fn run(config: &ExperimentConfig, root: &Path) -> ExperimentSummary {
    run_experiment(config, root)
        .unwrap_or_else(|e| panic!("{}: {e}", config.name))
        .summary
}

struct Reached {
    tta: f64,
    cta: f64,
    rta: f64,
}

fn reached(s: &ExperimentSummary) -> Result<Reached, String> {
    let t = &s.mean.targets[0];
    if t.reached != s.repetitions.len() {
        return Err(format!(
            "{} reached {} in {}/{} repetitions",
            s.name,
            t.target,
            t.reached,
            s.repetitions.len()
        ));
    }
    Ok(Reached {
        tta: t.tta_s.unwrap(),
        cta: t.cta_bytes.unwrap(),
        rta: t.rta_s.unwrap(),
    })
}

/// Convergence ordering against D-PSGD (10-regular) and GL.
fn criterion_4(root: &Path) -> Verdict {
    let start = Instant::now();
    let plexus = reached(&run(&common::load_config("convergence-plexus.toml"), root))?;
    let dpsgd = reached(&run(
        &common::load_config("convergence-dpsgd-regular.toml"),
        root,
    ))?;
    let gl = reached(&run(&common::load_config("convergence-gl.toml"), root))?;
    let mut parts = Vec::new();
    for (name, other) in [("D-PSGD", &dpsgd), ("GL", &gl)] {
        parts.push(check(
            plexus.tta < other.tta && plexus.cta < other.cta && plexus.rta < other.rta,
            format!(
                "TTA {:.0}/{:.0} s, CTA {:.2}/{:.2} MB, RTA {:.0}/{:.0} s vs {name}",
                plexus.tta,
                other.tta,
                plexus.cta / 1e6,
                other.cta / 1e6,
                plexus.rta,
                other.rta
            ),
        ));
    }
    let cta_ratio = dpsgd.cta / plexus.cta;
    let rta_ratio = dpsgd.rta / plexus.rta;
    parts.push(check(
        cta_ratio >= 5.0,
        format!("CTA ratio vs D-PSGD {cta_ratio:.1}x"),
    ));
    parts.push(check(
        rta_ratio >= 5.0,
        format!("RTA ratio vs D-PSGD {rta_ratio:.1}x"),
    ));
    parts.push(within(start.elapsed(), 15 * 60));
    all(parts)
}

/// Plexus and FL at the same sampling rate.
fn criterion_5(root: &Path) -> Verdict {
    let start = Instant::now();
    let plexus = run(&common::load_config("convergence-plexus.toml"), root);
    let fl = run(&common::load_config("convergence-fl.toml"), root);
    let gap = (plexus.mean.final_accuracy - fl.mean.final_accuracy).abs();
    let (a, b) = (plexus.mean.bytes_total, fl.mean.bytes_total);
    let ratio = a.max(b) / a.min(b);
    all(vec![
        check(
            gap <= 0.02,
            format!(
                "final accuracy {:.4} vs FL {:.4} ({:.2} points)",
                plexus.mean.final_accuracy,
                fl.mean.final_accuracy,
                gap * 100.0
            ),
        ),
        check(
            ratio <= 1.2,
            format!("bytes {:.2} vs {:.2} MB ({ratio:.3}x)", a / 1e6, b / 1e6),
        ),
        within(start.elapsed(), 10 * 60),
    ])
}

/// Sample-size sweep s = 10, 20, 40.
fn criterion_6(root: &Path) -> Verdict {
    let start = Instant::now();
    let base = common::load_config("convergence-plexus.toml");
    let outs = sweep(&base, "s=10,20,40", root).unwrap();
    let mut durations = Vec::new();
    let mut costs = Vec::new();
    for o in &outs {
        durations.push(o.summary.mean.mean_round_duration_s.ok_or("no rounds")?);
        costs.push(reached(&o.summary)?);
    }
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    let cta: Vec<f64> = costs.iter().map(|c| c.cta).collect();
    let rta: Vec<f64> = costs.iter().map(|c| c.rta).collect();
    all(vec![
        check(
            increasing(&durations),
            format!(
                "mean round duration {:.2} / {:.2} / {:.2} s",
                durations[0], durations[1], durations[2]
            ),
        ),
        check(
            increasing(&cta) && cta[2] / cta[0] >= 2.0,
            format!(
                "CTA {:.2} / {:.2} / {:.2} MB ({:.1}x)",
                cta[0] / 1e6,
                cta[1] / 1e6,
                cta[2] / 1e6,
                cta[2] / cta[0]
            ),
        ),
        check(
            increasing(&rta) && rta[2] / rta[0] >= 2.0,
            format!(
                "RTA {:.0} / {:.0} / {:.0} s ({:.1}x)",
                rta[0],
                rta[1],
                rta[2],
                rta[2] / rta[0]
            ),
        ),
        within(start.elapsed(), 20 * 60),
    ])
}

/// Ledger totals of a 50-round run against closed forms.
fn criterion_7() -> Verdict {
    let start = Instant::now();
    let config = common::load_config("convergence-plexus.toml");
    let env = config.environment(0).unwrap();
    let scenario = Scenario {
        membership: &env.membership,
        latency: &env.latency,
        workload: &env.task,
        budget: Budget::rounds(50),
        eval_every: 10.0,
        audit: false,
    };
    let cfg = ProtocolConfig {
        max_rounds: 50,
        ..config.protocol_config(0)
    };
    let run = run_plexus(&scenario, &cfg).unwrap();
    let size = model_size_bytes(&env.task.family.init(0));
    let p = common::predict_ledger(
        &env.membership,
        cfg.s,
        cfg.sf,
        50,
        size,
        &scenario.compute_secs(),
    );
    let m = &run.metrics;
    let waste = m.late_models as f64 / m.trainings() as f64;
    all(vec![
        check(m.rounds.len() == 50, format!("{} rounds", m.rounds.len())),
        check(
            m.bytes_total == p.bytes_total,
            format!("bytes {} (closed form {})", m.bytes_total, p.bytes_total),
        ),
        check(
            m.train_seconds_total() == p.train_seconds_total,
            format!(
                "training {} s (closed form {})",
                m.train_seconds_total(),
                p.train_seconds_total
            ),
        ),
        check(
            m.late_models * cfg.s as u64 == m.trainings() * (cfg.s - cfg.threshold()) as u64,
            format!(
                "waste {}/{} = {waste:.4} (expected 3/13 = {:.4})",
                m.late_models,
                m.trainings(),
                3.0 / 13.0
            ),
        ),
        within(start.elapsed(), 60),
    ])
}

/// Byte-identical reruns.
fn criterion_8() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut configs = common::small_configs();
    configs.push(common::load_config("smoke.toml"));
    for c in &configs {
        run_experiment(c, a.path()).unwrap();
        run_experiment(c, b.path()).unwrap();
    }
    let (x, y) = (common::read_tree(a.path()), common::read_tree(b.path()));
    let differing = x.iter().zip(&y).filter(|(p, q)| p != q).count() + x.len().abs_diff(y.len());
    check(
        differing == 0 && !x.is_empty(),
        format!(
            "{} configs, {} files compared, {differing} differ",
            configs.len(),
            x.len()
        ),
    )
}

fn main() {
    // Honour `cargo test -- --list` and filters enough to stay quiet.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let root = out.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("sampler equivalence & uniformity", Box::new(criterion_1)),
        ("FedAvg equivalence", Box::new(criterion_2)),
        ("bandwidth scheduler oracle", Box::new(criterion_3)),
        ("convergence ordering", Box::new(move || criterion_4(root))),
        ("Plexus-vs-FL parity", Box::new(move || criterion_5(root))),
        ("sample-size sweep", Box::new(move || criterion_6(root))),
        ("ledger exactness", Box::new(criterion_7)),
        ("determinism", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let verdict = f();
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {} ({name}): {tag} -- {detail}", i + 1);
        if verdict.is_err() {
            failed += 1;
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
