use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;

/// Regenerations attempted before giving up on a connected regular graph.
const MAX_REGENERATIONS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyKind {
    Regular { degree: usize, seed: u64 },
    OnePeerExponential,
}

/// A D-PSGD communication graph over node indices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// Fixed undirected `degree`-regular graph; `neighbors[i]` is sorted.
    Regular {
        degree: usize,
        neighbors: Vec<Vec<usize>>,
    },
    /// Node `i` sends to `i + 2^((k-1) mod ceil(log2 n))` in round `k`.
    OnePeerExponential { n: usize },
}

impl Topology {
    pub fn build(kind: TopologyKind, n: usize) -> Result<Topology, BaselineError> {
        match kind {
            TopologyKind::Regular { degree, seed } => Topology::regular(n, degree, seed),
            TopologyKind::OnePeerExponential => {
                if n < 2 {
                    return Err(BaselineError::Topology(
                        "one-peer exponential graph needs n >= 2".into(),
                    ));
                }
                Ok(Topology::OnePeerExponential { n })
            }
        }
    }

    /// Seeded random `degree`-regular graph: a circulant lattice scrambled
    /// by degree-preserving edge swaps, regenerated with `seed + 1, ...`
    /// until connected.
    pub fn regular(n: usize, degree: usize, seed: u64) -> Result<Topology, BaselineError> {
        if degree == 0 || degree >= n || (degree * n) % 2 == 1 {
            return Err(BaselineError::Topology(format!(
                "no {degree}-regular graph on {n} nodes"
            )));
        }
        for attempt in 0..MAX_REGENERATIONS {
            let neighbors = random_regular(n, degree, seed.wrapping_add(attempt));
            if is_connected(&neighbors) {
                return Ok(Topology::Regular { degree, neighbors });
            }
        }
        Err(BaselineError::Topology(format!(
            "no connected {degree}-regular graph on {n} nodes after {MAX_REGENERATIONS} seeds"
        )))
    }

    pub fn n(&self) -> usize {
        match self {
            Topology::Regular { neighbors, .. } => neighbors.len(),
            Topology::OnePeerExponential { n } => *n,
        }
    }

    /// Nodes `i` sends its model to in round `k`.
    pub fn out_neighbors(&self, i: usize, k: u64) -> Vec<usize> {
        match self {
            Topology::Regular { neighbors, .. } => neighbors[i].clone(),
            Topology::OnePeerExponential { n } => vec![one_peer_exp_neighbor(i, k, *n)],
        }
    }

    /// Number of models node `i` receives in round `k`.
    pub fn in_degree(&self, _i: usize) -> usize {
        match self {
            Topology::Regular { degree, .. } => *degree,
            Topology::OnePeerExponential { .. } => 1,
        }
    }

    /// Transfers per round across the whole network.
    pub fn transfers_per_round(&self) -> usize {
        match self {
            Topology::Regular { degree, neighbors } => degree * neighbors.len(),
            Topology::OnePeerExponential { n } => *n,
        }
    }
}

/// `ceil(log2 n)` for `n >= 2`.
pub fn hop_count(n: usize) -> u32 {
    assert!(n >= 2, "n must be at least 2");
    usize::BITS - (n - 1).leading_zeros()
}

/// Round-`k` partner of node `i` in the one-peer exponential graph.
pub fn one_peer_exp_neighbor(i: usize, k: u64, n: usize) -> usize {
    assert!(k >= 1, "rounds are 1-based");
    let hop = ((k - 1) % hop_count(n) as u64) as u32;
    ((i as u128 + (1u128 << hop)) % n as u128) as usize
}

fn random_regular(n: usize, degree: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Circulant start: i ~ i±1..i±degree/2, plus the antipode for odd degree.
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * degree / 2);
    for i in 0..n {
        for d in 1..=degree / 2 {
            edges.push(ordered(i, (i + d) % n));
        }
        if degree % 2 == 1 && i < n / 2 {
            edges.push(ordered(i, i + n / 2));
        }
    }
    let mut adjacency = vec![vec![false; n]; n];
    for &(a, b) in &edges {
        adjacency[a][b] = true;
        adjacency[b][a] = true;
    }
    // Double-edge swaps: (a,b),(c,d) -> (a,d),(c,b) when that keeps the graph simple.
    let swaps = 10 * edges.len();
    for _ in 0..swaps {
        let e1 = rng.random_range(0..edges.len());
        let e2 = rng.random_range(0..edges.len());
        if e1 == e2 {
            continue;
        }
        let (a, b) = edges[e1];
        let (mut c, mut d) = edges[e2];
        if rng.random::<bool>() {
            std::mem::swap(&mut c, &mut d);
        }
        if try_swap(&mut adjacency, a, b, c, d) {
            edges[e1] = ordered(a, d);
            edges[e2] = ordered(c, b);
        }
    }
    let mut neighbors = vec![Vec::with_capacity(degree); n];
    for (a, b) in edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for list in neighbors.iter_mut() {
        list.sort_unstable();
    }
    neighbors
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Replaces edges (a,b),(c,d) with (a,d),(c,b) if the result stays simple.
fn try_swap(adj: &mut [Vec<bool>], a: usize, b: usize, c: usize, d: usize) -> bool {
    let distinct = a != b && a != c && a != d && b != c && b != d && c != d;
    if !distinct || adj[a][d] || adj[c][b] {
        return false;
    }
    adj[a][b] = false;
    adj[b][a] = false;
    adj[c][d] = false;
    adj[d][c] = false;
    adj[a][d] = true;
    adj[d][a] = true;
    adj[c][b] = true;
    adj[b][c] = true;
    true
}

fn is_connected(neighbors: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; neighbors.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &neighbors[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.iter().all(|&s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exp_neighbors_cycle_hop_distances() {
        let hops: Vec<usize> = (1..=4).map(|k| one_peer_exp_neighbor(0, k, 8)).collect();
        assert_eq!(hops, [1, 2, 4, 1]);
        assert_eq!(hop_count(1000), 10);
        assert_eq!(hop_count(2), 1);
        let distinct: std::collections::BTreeSet<_> = (1..=30)
            .map(|k| one_peer_exp_neighbor(0, k, 1000))
            .collect();
        assert_eq!(distinct.len(), 10);
    }

    proptest! {
        #[test]
        fn exp_neighbor_is_permutation(n in 2usize..300, k in 1u64..50) {
            let mut hit = vec![false; n];
            for i in 0..n {
                let j = one_peer_exp_neighbor(i, k, n);
                prop_assert!(!hit[j]);
                hit[j] = true;
            }
        }

        #[test]
        fn regular_graph_is_simple_regular_connected(n in 12usize..80, degree in 1usize..11, seed: u64) {
            prop_assume!(degree * n % 2 == 0 && degree >= 2);
            let t = Topology::regular(n, degree, seed).unwrap();
            let Topology::Regular { neighbors, .. } = &t else { unreachable!() };
            for (i, list) in neighbors.iter().enumerate() {
                prop_assert_eq!(list.len(), degree);
                prop_assert!(!list.contains(&i));
                prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
                for &j in list {
                    prop_assert!(neighbors[j].contains(&i));
                }
            }
            prop_assert!(is_connected(neighbors));
        }
    }

    #[test]
    fn ten_regular_transfer_count() {
        let t = Topology::regular(1000, 10, 1).unwrap();
        assert_eq!(t.transfers_per_round(), 10_000);
        assert_eq!(
            Topology::build(TopologyKind::OnePeerExponential, 1000)
                .unwrap()
                .transfers_per_round(),
            1000
        );
    }

    #[test]
    fn regular_is_seeded() {
        assert_eq!(
            Topology::regular(50, 4, 9).unwrap(),
            Topology::regular(50, 4, 9).unwrap()
        );
        assert_ne!(
            Topology::regular(50, 4, 9).unwrap(),
            Topology::regular(50, 4, 10).unwrap()
        );
    }

    #[test]
    fn rejects_impossible_graphs() {
        assert!(Topology::regular(5, 3, 0).is_err());
        assert!(Topology::regular(5, 5, 0).is_err());
        assert!(Topology::build(TopologyKind::OnePeerExponential, 1).is_err());
    }
}
