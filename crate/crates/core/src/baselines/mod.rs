//! Reference algorithms: centralized FL with an unconstrained server,
//! synchronous D-PSGD over a fixed regular graph or the one-peer
//! exponential graph, and asynchronous Gossip Learning.

pub mod dpsgd;
pub mod fl;
pub mod gossip;
pub mod topology;

use thiserror::Error;

use crate::learning::LearningError;
use crate::model::{average_models, ModelError, ModelParameters};
use crate::simnet::SimError;

pub use dpsgd::{run_dpsgd, DpsgdConfig};
pub use fl::{run_fl, FlConfig, FlSampling};
pub use gossip::{run_gossip, GossipConfig};
pub use topology::{hop_count, one_peer_exp_neighbor, Topology, TopologyKind};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("invalid baseline config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
}

/// Age-weighted Gossip Learning merge. Values are weighted by model age and
/// the merged age is the larger of the two; two fresh models are averaged.
pub fn gl_merge(
    local: &ModelParameters,
    remote: &ModelParameters,
) -> Result<ModelParameters, ModelError> {
    if local.dim() != remote.dim() {
        return Err(ModelError::DimensionMismatch);
    }
    let (al, ar) = (local.age(), remote.age());
    if al == 0 && ar == 0 {
        return average_models(&[local.clone(), remote.clone()]);
    }
    if ar == 0 {
        return Ok(local.clone());
    }
    if al == 0 {
        let mut out = remote.clone();
        out.set_age(ar);
        return Ok(out);
    }
    let (wl, wr) = (al as f64, ar as f64);
    let total = wl + wr;
    let values = local
        .values()
        .iter()
        .zip(remote.values())
        .map(|(l, r)| (wl * l + wr * r) / total)
        .collect();
    ModelParameters::with_age(values, al.max(ar))
}

/// D-PSGD mixing step: uniform average of a node's own model and the models
/// it received. With uniform weights over a regular graph (or the one-peer
/// pairing) the mixing matrix is doubly stochastic.
pub fn mix(
    own: &ModelParameters,
    received: &[ModelParameters],
) -> Result<ModelParameters, ModelError> {
    let mut all = Vec::with_capacity(received.len() + 1);
    all.push(own.clone());
    all.extend_from_slice(received);
    let mut out = average_models(&all)?;
    out.set_age(own.age());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(values: &[f64], age: u64) -> ModelParameters {
        ModelParameters::with_age(values.to_vec(), age).unwrap()
    }

    #[test]
    fn merge_is_age_weighted() {
        let out = gl_merge(&m(&[0.0], 1), &m(&[4.0], 3)).unwrap();
        assert_eq!(out.values(), &[3.0]);
        assert_eq!(out.age(), 3);
    }

    #[test]
    fn merge_ignores_fresh_remote() {
        let local = m(&[1.0, 2.0], 7);
        assert_eq!(gl_merge(&local, &m(&[9.0, 9.0], 0)).unwrap(), local);
    }

    #[test]
    fn merge_equal_ages_is_mean() {
        assert_eq!(
            gl_merge(&m(&[0.0, 2.0], 5), &m(&[2.0, 4.0], 5)).unwrap(),
            m(&[1.0, 3.0], 5)
        );
        assert_eq!(
            gl_merge(&m(&[0.0], 0), &m(&[2.0], 0)).unwrap().values(),
            &[1.0]
        );
    }

    #[test]
    fn merge_dimension_mismatch() {
        assert!(gl_merge(&m(&[0.0], 1), &m(&[0.0, 1.0], 1)).is_err());
    }

    #[test]
    fn two_node_mix() {
        let a = mix(&m(&[0.0], 0), &[m(&[2.0], 0)]).unwrap();
        let b = mix(&m(&[2.0], 0), &[m(&[0.0], 0)]).unwrap();
        assert_eq!(a.values(), &[1.0]);
        assert_eq!(b.values(), &[1.0]);
    }

    #[test]
    fn consensus_is_fixed_point() {
        let t = Topology::regular(30, 4, 2).unwrap();
        let theta = m(&[0.3, -1.25, 7.0], 0);
        for i in 0..30 {
            let received: Vec<_> = t
                .out_neighbors(i, 1)
                .iter()
                .map(|_| theta.clone())
                .collect();
            assert_eq!(mix(&theta, &received).unwrap(), theta);
        }
    }

    fn mixing_round(t: &Topology, k: u64, models: &[ModelParameters]) -> Vec<ModelParameters> {
        let n = models.len();
        let mut inbox: Vec<Vec<ModelParameters>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in t.out_neighbors(i, k) {
                inbox[j].push(models[i].clone());
            }
        }
        (0..n)
            .map(|i| mix(&models[i], &inbox[i]).unwrap())
            .collect()
    }

    fn mean(models: &[ModelParameters]) -> Vec<f64> {
        let dim = models[0].dim();
        (0..dim)
            .map(|c| models.iter().map(|m| m.values()[c]).sum::<f64>() / models.len() as f64)
            .collect()
    }

    proptest! {
        #[test]
        fn mixing_conserves_network_mean(seed: u64, values in prop::collection::vec(-10.0f64..10.0, 40), k in 1u64..20) {
            let models: Vec<_> = values.chunks(2).map(|c| m(c, 0)).collect();
            let before = mean(&models);
            for t in [Topology::regular(20, 4, seed).unwrap(), Topology::OnePeerExponential { n: 20 }] {
                let after = mean(&mixing_round(&t, k, &models));
                for (a, b) in before.iter().zip(&after) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
