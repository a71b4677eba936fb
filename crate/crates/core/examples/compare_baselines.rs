//! Plexus, FL, D-PSGD and Gossip Learning on the same small task, written to
//! disk and summarized with `report` (TTA, CTA, RTA).
//!
//!     cargo run --release --example compare_baselines [out-dir]

use plexus::experiments::{report, run_experiment, ExperimentConfig};

const COMMON: &str = r#"
n = 40
s = 8
sf = 0.75
repetitions = 2
targets = [0.8]

[stop]
max_virtual_hours = 0.1
max_rounds = 40

[trainer]
eta = 0.002
momentum = 0.9

[dataset]
kind = "synthetic"
n_samples = 4000
d_in = 16
classes = 6
separation = 3.5

[partition]
kind = "dirichlet"
alpha = 0.5

[traces]
kind = "synthetic"
cities = 30
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("plexus-compare"));
    let algorithms = [
        ("plexus", "kind = \"plexus\"", 1),
        ("fl", "kind = \"fl\"", 1),
        (
            "dpsgd",
            "kind = \"dpsgd\"\ntopology = { kind = \"one-peer-exponential\" }",
            30,
        ),
        ("gl", "kind = \"gl\"\nround_timeout_s = 30", 30),
    ];
    let mut dirs = Vec::new();
    for (name, algorithm, eval_every) in algorithms {
        let text = format!(
            "name = \"{name}\"\neval_every = {eval_every}\n{COMMON}\n[algorithm]\n{algorithm}\n"
        );
        let out = run_experiment(&ExperimentConfig::from_toml(&text)?, &root)?;
        println!(
            "{name:>7}: final accuracy {:.3}, {:.1} MB, {:.2} device-hours",
            out.summary.mean.final_accuracy,
            out.summary.mean.bytes_total / 1e6,
            out.summary.mean.train_seconds_total / 3600.0
        );
        dirs.push(out.dir);
    }
    let (_, table) = report(&dirs, &root.join("report"))?;
    print!("\n{table}");
    println!("outputs under {}", root.display());
    Ok(())
}
