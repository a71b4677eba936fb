//! The two D-PSGD communication graphs.
//!
//!     cargo run --example topologies

use plexus::baselines::{hop_count, Topology, TopologyKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 16;
    let regular = Topology::build(TopologyKind::Regular { degree: 4, seed: 1 }, n)?;
    println!(
        "4-regular graph on {n} nodes, {} transfers per round",
        regular.transfers_per_round()
    );
    for i in 0..4 {
        println!("  node {i} -> {:?}", regular.out_neighbors(i, 1));
    }

    let one_peer = Topology::build(TopologyKind::OnePeerExponential, n)?;
    println!(
        "one-peer exponential graph: {} transfers per round, period {} rounds",
        one_peer.transfers_per_round(),
        hop_count(n)
    );
    for k in 1..=5 {
        let partners: Vec<usize> = (0..4).map(|i| one_peer.out_neighbors(i, k)[0]).collect();
        println!("  round {k}: nodes 0..4 -> {partners:?}");
    }
    Ok(())
}
