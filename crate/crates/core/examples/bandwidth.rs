//! Max-min fair sharing of uplinks and downlinks, and the event engine that
//! turns it into delivery times.
//!
//!     cargo run --example bandwidth

use plexus::simnet::{
    max_min_rates, Control, EventKind, LatencyMatrix, NetworkConfig, PortCapacity, SimError,
    SimEvent, Simulator, StopCondition, World,
};

struct Log;

impl World<&'static str> for Log {
    type Error = SimError;

    fn handle(
        &mut self,
        event: SimEvent<&'static str>,
        _: &mut Simulator<&'static str>,
    ) -> Result<Control, SimError> {
        if let EventKind::Deliver {
            src,
            dst,
            msg,
            bytes,
        } = event.kind
        {
            println!(
                "  t={:>7.3} s  {msg}: {bytes} B from {src} to {dst}",
                event.time
            );
        }
        Ok(Control::Continue)
    }
}

fn main() -> Result<(), SimError> {
    // An aggregator (node 0) with a fast uplink fans out to three peers.
    let ports = vec![
        PortCapacity {
            uplink_bps: 300_000.0,
            downlink_bps: 300_000.0,
        },
        PortCapacity {
            uplink_bps: 20_000.0,
            downlink_bps: 50_000.0,
        },
        PortCapacity {
            uplink_bps: 20_000.0,
            downlink_bps: 200_000.0,
        },
        PortCapacity {
            uplink_bps: 20_000.0,
            downlink_bps: 200_000.0,
        },
    ];
    let flows = [(0, 1), (0, 2), (0, 3)];
    println!("fan-out rates: {:?} B/s", max_min_rates(&ports, &flows));
    // Node 1's 50 kB/s downlink is its bottleneck; the other two split the rest.

    let mut sim = Simulator::new(NetworkConfig {
        ports,
        cities: vec![0, 0, 1, 1],
        latency: LatencyMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 80.0], vec![80.0, 0.0]],
        )
        .unwrap(),
    })
    .with_audit();
    for dst in 1..=3 {
        sim.send(0, dst, 100_000, "model")?;
    }
    // A small upload that shares node 0's downlink.
    sim.send(2, 0, 10_000, "update")?;
    println!("deliveries (one-way latency 40 ms between the two cities):");
    sim.run(&mut Log, StopCondition::Quiescence)?;
    let audit = sim.audit().unwrap();
    println!(
        "capacity overshoot {:.1e}, fairness violations {}",
        audit.max_capacity_violation, audit.fairness_violations
    );
    Ok(())
}
