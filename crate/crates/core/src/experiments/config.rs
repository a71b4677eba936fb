//! TOML experiment configuration.
//!
//! ```toml
//! name = "plexus-iid"
//! n = 100
//! s = 13
//! sf = 0.8
//! eval_every = 5        # rounds for plexus/fl, virtual seconds for dpsgd/gl
//! repetitions = 3
//! targets = [0.8, 0.85]
//!
//! [algorithm]
//! kind = "dpsgd"
//! topology = { kind = "regular", degree = 10, seed = 1 }
//!
//! [stop]
//! max_virtual_hours = 50.0
//! max_rounds = 400
//! ```
//!
//! Every other table (`seeds`, `trainer`, `model`, `dataset`, `partition`,
//! `traces`) has defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{DpsgdConfig, FlConfig, FlSampling, GossipConfig, TopologyKind};
use crate::learning::{
    partition, split_dataset, synth_dataset, Dataset, FederatedTask, ModelFamily, PartitionScheme,
    SynthSpec, TrainerConfig,
};
use crate::membership::Membership;
use crate::protocol::ProtocolConfig;
use crate::simnet::{
    apply_cities, load_profiles, synthesize_profiles, LatencyMatrix, ProfileSpread,
};

use super::{Budget, ExperimentError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Plexus {
        #[serde(default = "yes")]
        shared_init: bool,
    },
    Fl,
    Dpsgd {
        topology: TopologyKind,
    },
    Gl {
        #[serde(default = "default_timeout")]
        round_timeout_s: f64,
    },
}

impl AlgorithmConfig {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmConfig::Plexus { .. } => "plexus",
            AlgorithmConfig::Fl => "fl",
            AlgorithmConfig::Dpsgd { .. } => "dpsgd",
            AlgorithmConfig::Gl { .. } => "gl",
        }
    }

    /// Whether `eval_every` and `max_rounds` count aggregation rounds.
    pub fn is_round_based(&self) -> bool {
        matches!(self, AlgorithmConfig::Plexus { .. } | AlgorithmConfig::Fl)
    }
}

fn yes() -> bool {
    true
}

fn default_timeout() -> f64 {
    60.0
}

/// Base seeds; repetition `r` adds `r` to the dataset, partition and
/// protocol seeds. Traces stay fixed across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub dataset: u64,
    pub partition: u64,
    pub protocol: u64,
    pub traces: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            dataset: 1,
            partition: 2,
            protocol: 3,
            traces: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    #[default]
    Linear,
    Mlp {
        hidden: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default = "synth::n_samples")]
        n_samples: usize,
        #[serde(default = "synth::d_in")]
        d_in: usize,
        #[serde(default = "synth::classes")]
        classes: usize,
        #[serde(default = "synth::noise")]
        noise: f64,
        #[serde(default = "synth::separation")]
        separation: f64,
    },
    /// `label,f0,..` rows; split 80/20 per class with the dataset seed.
    Csv { path: PathBuf, classes: usize },
}

mod synth {
    use crate::learning::SynthSpec;

    pub fn n_samples() -> usize {
        SynthSpec::default().n_samples
    }
    pub fn d_in() -> usize {
        SynthSpec::default().d_in
    }
    pub fn classes() -> usize {
        SynthSpec::default().classes
    }
    pub fn noise() -> f64 {
        SynthSpec::default().noise
    }
    pub fn separation() -> f64 {
        SynthSpec::default().separation
    }
}

impl Default for DatasetSource {
    fn default() -> Self {
        let s = SynthSpec::default();
        DatasetSource::Synthetic {
            n_samples: s.n_samples,
            d_in: s.d_in,
            classes: s.classes,
            noise: s.noise,
            separation: s.separation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TraceSource {
    /// Seeded synthetic traces: `cities` random points on a sphere and
    /// log-normal device profiles.
    Synthetic {
        #[serde(default = "default_cities")]
        cities: usize,
        #[serde(default)]
        spread: ProfileSpread,
    },
    /// Latency matrix and device profile CSV files; the first `n` profiles
    /// are used.
    Files { latency: PathBuf, profiles: PathBuf },
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Synthetic {
            cities: default_cities(),
            spread: ProfileSpread::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_virtual_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_sf")]
    pub sf: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub targets: Vec<f64>,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default = "default_partition")]
    pub partition: PartitionScheme,
    #[serde(default)]
    pub traces: TraceSource,
}

fn default_cities() -> usize {
    227
}

fn default_name() -> String {
    "experiment".into()
}

fn default_s() -> usize {
    13
}

fn default_sf() -> f64 {
    0.8
}

fn default_eval_every() -> f64 {
    1.0
}

fn default_repetitions() -> u32 {
    1
}

fn default_partition() -> PartitionScheme {
    PartitionScheme::Iid
}

/// Inputs shared by every algorithm for one repetition.
pub struct Environment {
    pub membership: Membership,
    pub latency: LatencyMatrix,
    pub task: FederatedTask,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string().trim().to_string()))
    }

    /// Reads a config file; relative trace and dataset paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                ExperimentError::ConfigNotFound(path.display().to_string())
            }
            _ => ExperimentError::Config(format!("{}: {e}", path.display())),
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let TraceSource::Files { latency, profiles } = &mut self.traces {
            fix(latency);
            fix(profiles);
        }
        if let DatasetSource::Csv { path, .. } = &mut self.dataset {
            fix(path);
        }
    }

    /// Canonical serialized form: fields in declaration order, defaults
    /// made explicit.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.s == 0 || self.s > self.n {
            return bad(format!("s must be in 1..={}, got {}", self.n, self.s));
        }
        if !(self.sf > 0.0 && self.sf <= 1.0) {
            return bad(format!("sf must be in (0, 1], got {}", self.sf));
        }
        if (self.s as f64 * self.sf).floor() < 1.0 {
            return bad(format!(
                "floor(s * sf) must be at least 1 (s = {}, sf = {})",
                self.s, self.sf
            ));
        }
        if !(self.eval_every > 0.0 && self.eval_every.is_finite()) {
            return bad(format!(
                "eval_every must be positive, got {}",
                self.eval_every
            ));
        }
        if self.algorithm.is_round_based() && self.eval_every.fract() != 0.0 {
            return bad(
                "eval_every counts rounds for this algorithm and must be an integer".into(),
            );
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if let Some(t) = self.targets.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return bad(format!("target accuracy {t} outside (0, 1]"));
        }
        match (self.stop.max_virtual_hours, self.stop.max_rounds) {
            (None, None) => return bad("stop needs max_virtual_hours or max_rounds".into()),
            (Some(h), _) if !(h > 0.0 && h.is_finite()) => {
                return bad(format!("max_virtual_hours must be positive, got {h}"))
            }
            (_, Some(0)) => return bad("max_rounds must be at least 1".into()),
            _ => {}
        }
        if let AlgorithmConfig::Gl { round_timeout_s } = self.algorithm {
            if !(round_timeout_s > 0.0 && round_timeout_s.is_finite()) {
                return bad(format!(
                    "round_timeout_s must be positive, got {round_timeout_s}"
                ));
            }
        }
        self.trainer.validate()?;
        match &self.traces {
            TraceSource::Synthetic { cities, spread } => {
                if *cities == 0 {
                    return bad("traces need at least one city".into());
                }
                let ok = |v: f64| v > 0.0 && v.is_finite();
                if !(ok(spread.median_uplink_bps)
                    && ok(spread.median_downlink_bps)
                    && ok(spread.median_sec_per_step))
                    || !(spread.sigma >= 0.0 && spread.sigma.is_finite())
                {
                    return bad(
                        "synthetic trace medians must be positive and sigma non-negative".into(),
                    );
                }
            }
            TraceSource::Files { latency, profiles } => {
                for p in [latency, profiles] {
                    if !p.exists() {
                        return bad(format!("trace file not found: {}", p.display()));
                    }
                }
            }
        }
        if let DatasetSource::Csv { path, .. } = &self.dataset {
            if !path.exists() {
                return bad(format!("dataset file not found: {}", path.display()));
            }
        }
        Ok(())
    }

    pub fn budget(&self) -> Budget {
        Budget {
            max_virtual_secs: self
                .stop
                .max_virtual_hours
                .map_or(f64::INFINITY, |h| h * 3600.0),
            max_rounds: self.stop.max_rounds.unwrap_or(u64::MAX),
        }
    }

    pub fn protocol_seed(&self, rep: u32) -> u64 {
        self.seeds.protocol.wrapping_add(rep as u64)
    }

    pub fn protocol_config(&self, rep: u32) -> ProtocolConfig {
        let shared_init = match self.algorithm {
            AlgorithmConfig::Plexus { shared_init } => shared_init,
            _ => true,
        };
        ProtocolConfig {
            s: self.s,
            sf: self.sf,
            max_rounds: self.stop.max_rounds.unwrap_or(u64::MAX),
            shared_init,
            init_seed: self.protocol_seed(rep),
        }
    }

    pub fn fl_config(&self, rep: u32) -> FlConfig {
        FlConfig {
            s: self.s,
            sf: self.sf,
            init_seed: self.protocol_seed(rep),
            sampling: FlSampling::Uniform {
                seed: self.protocol_seed(rep) ^ 0x005e_edf1,
            },
        }
    }

    pub fn dpsgd_config(&self, rep: u32) -> Option<DpsgdConfig> {
        match self.algorithm {
            AlgorithmConfig::Dpsgd { topology } => Some(DpsgdConfig {
                topology,
                init_seed: self.protocol_seed(rep),
            }),
            _ => None,
        }
    }

    pub fn gossip_config(&self, rep: u32) -> Option<GossipConfig> {
        match self.algorithm {
            AlgorithmConfig::Gl { round_timeout_s } => Some(GossipConfig {
                round_timeout_s,
                init_seed: self.protocol_seed(rep),
                seed: self.protocol_seed(rep) ^ 0x0060_551b,
            }),
            _ => None,
        }
    }

    /// Latency matrix and membership (profiles with round-robin cities).
    pub fn network(&self) -> Result<(Membership, LatencyMatrix), ExperimentError> {
        let (profiles, latency) = match &self.traces {
            TraceSource::Synthetic { cities, spread } => (
                synthesize_profiles(self.n, spread, self.seeds.traces),
                LatencyMatrix::synthetic(*cities, self.seeds.traces),
            ),
            TraceSource::Files { latency, profiles } => {
                let mut p = load_profiles(profiles)?;
                if p.len() < self.n {
                    return Err(ExperimentError::Config(format!(
                        "{} has {} profiles, need n = {}",
                        profiles.display(),
                        p.len(),
                        self.n
                    )));
                }
                p.truncate(self.n);
                (p, LatencyMatrix::load(latency)?)
            }
        };
        let mut membership = Membership::new(profiles)?;
        apply_cities(&mut membership, &latency);
        Ok((membership, latency))
    }

    pub fn model_family(&self, d_in: usize, classes: usize) -> ModelFamily {
        match self.model {
            ModelSpec::Linear => ModelFamily::Linear { d_in, classes },
            ModelSpec::Mlp { hidden } => ModelFamily::Mlp {
                d_in,
                hidden,
                classes,
            },
        }
    }

    /// Train/test data for repetition `rep`.
    pub fn data(&self, rep: u32) -> Result<(Dataset, Dataset), ExperimentError> {
        let seed = self.seeds.dataset.wrapping_add(rep as u64);
        let split = match &self.dataset {
            DatasetSource::Synthetic {
                n_samples,
                d_in,
                classes,
                noise,
                separation,
            } => synth_dataset(&SynthSpec {
                seed,
                n_samples: *n_samples,
                d_in: *d_in,
                classes: *classes,
                noise: *noise,
                separation: *separation,
            })?,
            DatasetSource::Csv { path, classes } => {
                split_dataset(&Dataset::load_csv(path, *classes)?, seed)
            }
        };
        Ok((split.train, split.test))
    }

    /// Builds traces, data shards and the learning task for repetition `rep`.
    pub fn environment(&self, rep: u32) -> Result<Environment, ExperimentError> {
        let (membership, latency) = self.network()?;
        let (train, test) = self.data(rep)?;
        let family = self.model_family(train.d_in, train.classes);
        let shards = partition(
            &train,
            &membership,
            self.partition,
            self.seeds.partition.wrapping_add(rep as u64),
        )?;
        Ok(Environment {
            membership,
            latency,
            task: FederatedTask {
                family,
                trainer: self.trainer.clone(),
                shards,
                test,
            },
        })
    }
}
