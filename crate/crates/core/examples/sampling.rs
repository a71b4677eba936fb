//! Every node derives the same round sample and aggregator from nothing but
//! its membership view and the round number.
//!
//!     cargo run --example sampling

use plexus::membership::{Membership, RoundNumber};
use plexus::sampler::{node_rank_key, sample_with_aggregator};
use plexus::simnet::{synthesize_profiles, ProfileSpread};

fn main() {
    let membership =
        Membership::new(synthesize_profiles(100, &ProfileSpread::default(), 7)).unwrap();
    // Another node's view lists the same members in a different order.
    let order: Vec<usize> = (0..100).rev().collect();
    let other_view = membership.reordered(&order);

    for k in 1..=5 {
        let k = RoundNumber::new(k).unwrap();
        let s = sample_with_aggregator(k, 13, &membership).unwrap();
        assert_eq!(s, sample_with_aggregator(k, 13, &other_view).unwrap());
        let agg = s.aggregator.as_ref().unwrap();
        let ids: Vec<&str> = s.participants.iter().map(|n| n.as_str()).collect();
        println!(
            "round {k}: aggregator {agg} ({:.0} B/s up), sample {}",
            membership.profile(agg).unwrap().uplink_bps,
            ids.join(" ")
        );
    }

    let first = &membership.nodes()[0];
    let key = node_rank_key(first, RoundNumber::FIRST);
    let hex: String = key
        .digest
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect();
    println!("rank key of {first} in round 1 starts with {hex}...");

    // Over many rounds each node is picked about s/n of the time.
    let rounds = 2000;
    let mut hits = vec![0u32; membership.len()];
    for k in 1..=rounds {
        for p in sample_with_aggregator(RoundNumber::new(k).unwrap(), 13, &membership)
            .unwrap()
            .participants
        {
            hits[membership.index_of(&p).unwrap()] += 1;
        }
    }
    let min = *hits.iter().min().unwrap() as f64 / rounds as f64;
    let max = *hits.iter().max().unwrap() as f64 / rounds as f64;
    println!("selection frequency over {rounds} rounds: {min:.3}..{max:.3} (expected 0.130)");
}
