//! Plexus on a synthetic non-IID task over synthetic traces, assembled from
//! library pieces rather than a config file.
//!
//!     cargo run --release --example simulate_plexus

use plexus::experiments::{round_duration_stats, run_plexus, Budget, Scenario};
use plexus::learning::{
    partition, synth_dataset, FederatedTask, ModelFamily, PartitionScheme, SynthSpec, TrainerConfig,
};
use plexus::membership::Membership;
use plexus::protocol::ProtocolConfig;
use plexus::simnet::{apply_cities, synthesize_profiles, LatencyMatrix, ProfileSpread};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 60;
    let latency = LatencyMatrix::synthetic(40, 1);
    let mut membership = Membership::new(synthesize_profiles(n, &ProfileSpread::default(), 1))?;
    apply_cities(&mut membership, &latency);

    let data = synth_dataset(&SynthSpec {
        seed: 2,
        n_samples: 6000,
        d_in: 16,
        classes: 10,
        noise: 0.0,
        separation: 3.5,
    })?;
    let task = FederatedTask {
        family: ModelFamily::Linear {
            d_in: 16,
            classes: 10,
        },
        trainer: TrainerConfig {
            eta: 0.002,
            momentum: 0.9,
            ..TrainerConfig::default()
        },
        shards: partition(
            &data.train,
            &membership,
            PartitionScheme::Dirichlet { alpha: 0.5 },
            3,
        )?,
        test: data.test,
    };

    let scenario = Scenario {
        membership: &membership,
        latency: &latency,
        workload: &task,
        budget: Budget::rounds(40),
        eval_every: 5.0,
        audit: true,
    };
    let run = run_plexus(
        &scenario,
        &ProtocolConfig {
            s: 10,
            sf: 0.8,
            max_rounds: 40,
            ..ProtocolConfig::default()
        },
    )?;

    let m = &run.metrics;
    println!(
        "{:>8} {:>6} {:>9} {:>10} {:>12}",
        "time_s", "round", "accuracy", "MB", "device-s"
    );
    for p in &m.accuracy {
        println!(
            "{:>8.1} {:>6} {:>9.4} {:>10.2} {:>12.1}",
            p.time_s,
            p.round,
            p.accuracy,
            p.bytes_total as f64 / 1e6,
            p.train_seconds_total
        );
    }
    if let Some(d) = round_duration_stats(&m.rounds) {
        println!(
            "round duration: mean {:.2} s, std {:.2} s, max {:.2} s",
            d.mean, d.std, d.max
        );
    }
    println!(
        "{} transfers, {} late models dropped",
        m.transfers, m.late_models
    );
    let audit = run.audit.unwrap();
    println!(
        "bandwidth audit: {} transfers checked, capacity overshoot {:.1e}",
        audit.completions.len(),
        audit.max_capacity_violation
    );
    Ok(())
}
