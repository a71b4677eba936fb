//! Experiment orchestration: configuration, the simulated Plexus runtime,
//! metrics (TTA/CTA/RTA, round durations), sweeps and reports.

pub mod config;
pub mod metrics;
pub mod plexus;
pub mod report;
pub mod runner;

use std::path::Path;

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::learning::{LearningError, Workload};
use crate::membership::{Membership, MembershipError};
use crate::model::{ModelError, ModelParameters};
use crate::protocol::ProtocolError;
use crate::sampler::SamplerError;
use crate::simnet::{compute_time, LatencyMatrix, SimError, TraceError};

pub use config::{AlgorithmConfig, ExperimentConfig, StopConfig, TraceSource};
pub use metrics::{
    round_duration_stats, AccuracyPoint, DurationStats, LedgerPoint, MetricsLedger, RoundRecord,
};
pub use plexus::run_plexus;
pub use report::{report, Summary};
pub use runner::{output_root, run_experiment, sweep, ExperimentOutput, OUT_DIR_ENV};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config not found: {0}")]
    ConfigNotFound(String),
    #[error("config: {0}")]
    Config(String),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("output: {0}")]
    Output(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Membership(#[from] MembershipError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        ExperimentError::Output(format!("{}: {e}", path.display()))
    }

    /// Stable machine-parsable prefix for command-line error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::ConfigNotFound(_) | ExperimentError::Config(_) => "config",
            ExperimentError::Trace(_) => "trace",
            ExperimentError::Output(_) => "output",
            ExperimentError::Protocol(_) => "protocol",
            ExperimentError::Baseline(_) => "baseline",
            ExperimentError::Learning(_) => "learning",
            ExperimentError::Model(_) => "model",
            ExperimentError::Membership(_) => "membership",
            ExperimentError::Sampler(_) => "sampler",
            ExperimentError::Sim(_) => "simulation",
        }
    }
}

/// Whichever limit is hit first ends a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_virtual_secs: f64,
    pub max_rounds: u64,
}

impl Budget {
    pub fn rounds(max_rounds: u64) -> Self {
        Budget {
            max_virtual_secs: f64::INFINITY,
            max_rounds,
        }
    }
}

/// Everything an algorithm run needs besides its own parameters.
pub struct Scenario<'a> {
    pub membership: &'a Membership,
    pub latency: &'a LatencyMatrix,
    pub workload: &'a dyn Workload,
    pub budget: Budget,
    /// Rounds between evaluations for Plexus and FL; virtual seconds for
    /// D-PSGD and GL.
    pub eval_every: f64,
    /// Record bandwidth-model invariant checks while running.
    pub audit: bool,
}

impl Scenario<'_> {
    /// Seconds one training invocation takes on each node.
    pub fn compute_secs(&self) -> Vec<f64> {
        let steps = self.workload.local_steps();
        self.membership
            .profiles()
            .iter()
            .map(|p| compute_time(p, steps))
            .collect()
    }

    pub(crate) fn stop(&self) -> crate::simnet::StopCondition {
        if self.budget.max_virtual_secs.is_finite() {
            crate::simnet::StopCondition::Until(self.budget.max_virtual_secs)
        } else {
            crate::simnet::StopCondition::Quiescence
        }
    }

    /// Whether an evaluation is due after round `k`.
    pub(crate) fn eval_due(&self, k: u64) -> bool {
        let every = (self.eval_every.max(1.0)) as u64;
        k % every == 0 || k >= self.budget.max_rounds
    }
}

/// Accuracy mean and standard deviation over a population of models.
pub fn evaluate_population(
    workload: &dyn Workload,
    models: &[ModelParameters],
) -> Result<(f64, f64), LearningError> {
    let acc = models
        .iter()
        .map(|m| workload.evaluate(m))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(metrics::mean_std(&acc))
}
