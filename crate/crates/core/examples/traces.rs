//! Synthesize latency and device traces, save them as CSV and load them back
//! into a membership.
//!
//!     cargo run --example traces [dir]

use plexus::membership::Membership;
use plexus::simnet::{
    apply_cities, load_profiles, save_profiles, synthesize_profiles, LatencyMatrix, ProfileSpread,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("plexus-traces"));
    std::fs::create_dir_all(&dir)?;

    let latency = LatencyMatrix::synthetic(12, 3);
    let spread = ProfileSpread {
        sigma: 0.8,
        ..ProfileSpread::default()
    };
    latency.save(&dir.join("latency.csv"))?;
    save_profiles(
        &synthesize_profiles(50, &spread, 3),
        &dir.join("profiles.csv"),
    )?;

    let latency = LatencyMatrix::load(&dir.join("latency.csv"))?;
    let mut membership = Membership::new(load_profiles(&dir.join("profiles.csv"))?)?;
    apply_cities(&mut membership, &latency);

    let rtts: Vec<f64> = (0..latency.len())
        .flat_map(|a| {
            (0..latency.len())
                .filter(move |&b| b != a)
                .map(move |b| (a, b))
        })
        .map(|(a, b)| latency.rtt_ms(a, b))
        .collect();
    let (lo, hi) = rtts
        .iter()
        .fold((f64::MAX, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    println!(
        "{} cities, inter-city RTT {lo:.1}..{hi:.1} ms",
        latency.len()
    );

    let mut up: Vec<f64> = membership.profiles().iter().map(|p| p.uplink_bps).collect();
    up.sort_by(f64::total_cmp);
    println!(
        "{} devices, uplink p10 {:.0} / p50 {:.0} / p90 {:.0} B/s",
        membership.len(),
        up[up.len() / 10],
        up[up.len() / 2],
        up[up.len() * 9 / 10]
    );
    for p in membership.profiles().iter().take(3) {
        println!(
            "  {}: city {} ({}), {:.2} s/step",
            p.node,
            p.city_index,
            latency.cities()[p.city_index],
            p.sec_per_local_step
        );
    }
    println!("written to {}", dir.display());
    Ok(())
}
