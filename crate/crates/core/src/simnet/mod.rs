//! Network and compute simulation: a deterministic event loop with virtual
//! time, RTT-derived latency between cities, max-min fair sharing of each
//! node's uplink and downlink, and a linear compute-time model.

pub mod bandwidth;
pub mod engine;
pub mod latency;
pub mod profiles;

use std::path::Path;

use thiserror::Error;

use crate::membership::{DeviceProfile, Membership};

pub use bandwidth::{max_min_rates, FairShareNetwork, PortCapacity, TransferId, TransferRecord};
pub use engine::{
    Audit, CompletedTransfer, Control, Delivery, EventKind, NetworkConfig, RunSummary, SimEvent,
    Simulator, StopCondition, World,
};
pub use latency::{apply_cities, assign_cities, LatencyMatrix};
pub use profiles::{
    load_profiles, read_profiles, save_profiles, synthesize_profiles, write_profiles, ProfileSpread,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation bug: event scheduled at {at} before current time {now}")]
    EventInPast { at: f64, now: f64 },
    #[error("unknown node index {0}")]
    UnknownNode(usize),
    #[error("invalid duration {0}")]
    InvalidDuration(f64),
}

/// Trace loading failure, with the 1-based line it refers to (0 if none).
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

impl TraceError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        TraceError {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        TraceError::at(0, format!("{}: {e}", path.display()))
    }

    pub(crate) fn csv(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        TraceError::at(line, e.to_string())
    }
}

/// Seconds a device needs for `local_steps` minibatch steps.
pub fn compute_time(profile: &DeviceProfile, local_steps: u32) -> f64 {
    profile.sec_per_local_step * local_steps as f64
}

/// Network description for a membership: one port pair per node, cities as
/// assigned in the profiles.
pub fn network_for(membership: &Membership, latency: &LatencyMatrix) -> NetworkConfig {
    NetworkConfig {
        ports: membership
            .profiles()
            .iter()
            .map(|p| PortCapacity {
                uplink_bps: p.uplink_bps,
                downlink_bps: p.downlink_bps,
            })
            .collect(),
        cities: membership.profiles().iter().map(|p| p.city_index).collect(),
        latency: latency.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compute_time_is_linear() {
        let m = Membership::uniform(1, 1.0, 1.0, 2.0);
        assert_eq!(compute_time(&m.profiles()[0], 5), 10.0);
    }
}
