use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{run_dpsgd, run_fl, run_gossip};

use super::config::{AlgorithmConfig, Environment, ExperimentConfig};
use super::metrics::{round_duration_stats, DurationStats, MetricsLedger};
use super::plexus::run_plexus;
use super::{ExperimentError, Scenario};

/// Environment variable selecting the output directory root.
pub const OUT_DIR_ENV: &str = "PLEXUS_OUT";

/// `$PLEXUS_OUT`, or `./plexus-out` when unset.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("plexus-out"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: f64,
    /// `None` when the target was never reached.
    pub tta_s: Option<f64>,
    pub cta_bytes: Option<u64>,
    pub rta_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub repetition: u32,
    pub final_time_s: f64,
    pub final_accuracy: f64,
    pub final_accuracy_std: f64,
    pub rounds: usize,
    pub bytes_total: u64,
    pub train_seconds_total: f64,
    pub trainings: u64,
    pub late_models: u64,
    pub round_durations: Option<DurationStats>,
    pub targets: Vec<TargetResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanTarget {
    pub target: f64,
    pub reached: usize,
    pub tta_s: Option<f64>,
    pub cta_bytes: Option<f64>,
    pub rta_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub final_accuracy: f64,
    pub bytes_total: f64,
    pub train_seconds_total: f64,
    pub mean_round_duration_s: Option<f64>,
    pub targets: Vec<MeanTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub algorithm: String,
    pub config_hash: String,
    pub repetitions: Vec<RepetitionSummary>,
    pub mean: MeanSummary,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub metrics: Vec<MetricsLedger>,
    pub summary: ExperimentSummary,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Runs one repetition of the configured algorithm.
pub fn run_repetition(
    config: &ExperimentConfig,
    rep: u32,
) -> Result<MetricsLedger, ExperimentError> {
    let Environment {
        membership,
        latency,
        task,
    } = config.environment(rep)?;
    let scenario = Scenario {
        membership: &membership,
        latency: &latency,
        workload: &task,
        budget: config.budget(),
        eval_every: config.eval_every,
        audit: false,
    };
    Ok(match &config.algorithm {
        AlgorithmConfig::Plexus { .. } => {
            run_plexus(&scenario, &config.protocol_config(rep))?.metrics
        }
        AlgorithmConfig::Fl => run_fl(&scenario, &config.fl_config(rep))?.metrics,
        AlgorithmConfig::Dpsgd { .. } => {
            run_dpsgd(&scenario, &config.dpsgd_config(rep).expect("dpsgd"))?.metrics
        }
        AlgorithmConfig::Gl { .. } => {
            run_gossip(&scenario, &config.gossip_config(rep).expect("gl"))?.metrics
        }
    })
}

pub fn summarize_repetition(rep: u32, m: &MetricsLedger, targets: &[f64]) -> RepetitionSummary {
    let last = m.last_accuracy();
    RepetitionSummary {
        repetition: rep,
        final_time_s: m.final_time,
        final_accuracy: last.map_or(0.0, |p| p.accuracy),
        final_accuracy_std: last.map_or(0.0, |p| p.accuracy_std),
        rounds: m.rounds.len(),
        bytes_total: m.bytes_total,
        train_seconds_total: m.train_seconds_total(),
        trainings: m.trainings(),
        late_models: m.late_models,
        round_durations: round_duration_stats(&m.rounds),
        targets: targets
            .iter()
            .map(|&t| TargetResult {
                target: t,
                tta_s: m.tta(t),
                cta_bytes: m.cta(t),
                rta_s: m.rta(t),
            })
            .collect(),
    }
}

/// Cross-repetition means; unreached targets are excluded and noted.
pub fn summarize(
    name: &str,
    algorithm: &str,
    config_hash: &str,
    reps: Vec<RepetitionSummary>,
    targets: &[f64],
) -> ExperimentSummary {
    let mut notes = Vec::new();
    let mean_targets = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let hit: Vec<&TargetResult> = reps
                .iter()
                .map(|r| &r.targets[i])
                .filter(|r| r.tta_s.is_some())
                .collect();
            if hit.len() < reps.len() {
                let missed: Vec<String> = reps
                    .iter()
                    .filter(|r| r.targets[i].tta_s.is_none())
                    .map(|r| r.repetition.to_string())
                    .collect();
                notes.push(format!(
                    "target {t} not reached in repetition(s) {}; excluded from means",
                    missed.join(",")
                ));
            }
            MeanTarget {
                target: t,
                reached: hit.len(),
                tta_s: mean(hit.iter().filter_map(|r| r.tta_s)),
                cta_bytes: mean(hit.iter().filter_map(|r| r.cta_bytes.map(|b| b as f64))),
                rta_s: mean(hit.iter().filter_map(|r| r.rta_s)),
            }
        })
        .collect();
    let mean_summary = MeanSummary {
        final_accuracy: mean(reps.iter().map(|r| r.final_accuracy)).unwrap_or(0.0),
        bytes_total: mean(reps.iter().map(|r| r.bytes_total as f64)).unwrap_or(0.0),
        train_seconds_total: mean(reps.iter().map(|r| r.train_seconds_total)).unwrap_or(0.0),
        mean_round_duration_s: mean(
            reps.iter()
                .filter_map(|r| r.round_durations.as_ref().map(|d| d.mean)),
        ),
        targets: mean_targets,
    };
    ExperimentSummary {
        name: name.to_string(),
        algorithm: algorithm.to_string(),
        config_hash: config_hash.to_string(),
        repetitions: reps,
        mean: mean_summary,
        notes,
    }
}

/// Runs every repetition and writes `<root>/<name>/` containing
/// `config.toml`, `rep<r>/{accuracy,ledger,rounds}.csv` and `summary.json`.
pub fn run_experiment(
    config: &ExperimentConfig,
    root: &Path,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let dir = root.join(&config.name);
    std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    std::fs::write(dir.join("config.toml"), config.canonical())
        .map_err(|e| ExperimentError::io(&dir, e))?;
    let mut metrics = Vec::new();
    let mut reps = Vec::new();
    for rep in 0..config.repetitions {
        let m = run_repetition(config, rep)?;
        m.write_csvs(&dir.join(format!("rep{rep}")))?;
        reps.push(summarize_repetition(rep, &m, &config.targets));
        metrics.push(m);
    }
    let summary = summarize(
        &config.name,
        config.algorithm.label(),
        &config.hash(),
        reps,
        &config.targets,
    );
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| ExperimentError::Output(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")
        .map_err(|e| ExperimentError::io(&dir, e))?;
    Ok(ExperimentOutput {
        dir,
        metrics,
        summary,
    })
}

/// Parses `key=v1,v2,...` into the key and its values.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<toml::Value>), ExperimentError> {
    let (key, values) = spec.split_once('=').ok_or_else(|| {
        ExperimentError::Config(format!("sweep spec must look like key=v1,v2: {spec}"))
    })?;
    let values = values
        .split(',')
        .map(|v| {
            let v = v.trim();
            toml::from_str::<toml::Table>(&format!("x = {v}"))
                .ok()
                .and_then(|mut t| t.remove("x"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()))
        })
        .collect();
    Ok((key.trim().to_string(), values))
}

/// Copy of `base` with the dotted `key` set to `value`; the name gets a
/// `-key<value>` suffix.
pub fn with_override(
    base: &ExperimentConfig,
    key: &str,
    value: &toml::Value,
) -> Result<ExperimentConfig, ExperimentError> {
    let mut root =
        toml::Value::try_from(base).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let mut slot = &mut root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = slot.as_table_mut().ok_or_else(|| {
            ExperimentError::Config(format!("cannot set {key}: {part} is not a table"))
        })?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value.clone());
            break;
        }
        slot = table
            .get_mut(*part)
            .ok_or_else(|| ExperimentError::Config(format!("unknown config key {key}")))?;
    }
    let mut config: ExperimentConfig = root.try_into().map_err(|e: toml::de::Error| {
        ExperimentError::Config(format!("{key}: {}", e.to_string().trim()))
    })?;
    let shown = match value {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    config.name = format!("{}-{}{}", base.name, parts.last().unwrap(), shown);
    Ok(config)
}

/// Runs `base` once per value of a single parameter.
pub fn sweep(
    base: &ExperimentConfig,
    spec: &str,
    root: &Path,
) -> Result<Vec<ExperimentOutput>, ExperimentError> {
    let (key, values) = parse_sweep(spec)?;
    let configs = values
        .iter()
        .map(|v| with_override(base, &key, v))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &configs {
        c.validate()?;
    }
    configs.iter().map(|c| run_experiment(c, root)).collect()
}
