//! How the sample size trades wall-clock time against device time: one
//! Plexus config swept over `s`.
//!
//!     cargo run --release --example sample_size_sweep

use plexus::experiments::{sweep, ExperimentConfig};

const BASE: &str = r#"
name = "plexus"
n = 60
targets = [0.85]
eval_every = 1

[algorithm]
kind = "plexus"

[stop]
max_rounds = 60

[trainer]
eta = 0.002
momentum = 0.9

[dataset]
kind = "synthetic"
n_samples = 6000
d_in = 16
classes = 10
separation = 3.5

[partition]
kind = "dirichlet"
alpha = 0.5

[traces]
kind = "synthetic"
cities = 40
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("plexus-sweep");
    let base = ExperimentConfig::from_toml(BASE)?;
    println!(
        "{:>4} {:>10} {:>10} {:>10} {:>12}",
        "s", "TTA (s)", "RTA (h)", "CTA (MB)", "round (s)"
    );
    for out in sweep(&base, "s=4,8,16,32", &root)? {
        let s = &out.summary;
        let t = &s.mean.targets[0];
        let fmt =
            |v: Option<f64>, scale: f64| v.map_or("-".to_string(), |v| format!("{:.2}", v / scale));
        println!(
            "{:>4} {:>10} {:>10} {:>10} {:>12.2}",
            s.name.trim_start_matches("plexus-s"),
            fmt(t.tta_s, 1.0),
            fmt(t.rta_s, 3600.0),
            fmt(t.cta_bytes, 1e6),
            s.mean.mean_round_duration_s.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
