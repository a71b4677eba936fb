//! Class histograms of the first few shards under each partition scheme.
//!
//!     cargo run --example data_partitioning

use plexus::learning::{partition, synth_dataset, PartitionScheme, SynthSpec};
use plexus::membership::Membership;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synth_dataset(&SynthSpec {
        n_samples: 5000,
        classes: 5,
        ..SynthSpec::default()
    })?;
    let membership = Membership::uniform(20, 1e5, 1e5, 1.0);
    println!("train set classes: {:?}", data.train.class_counts());

    for scheme in [
        PartitionScheme::Iid,
        PartitionScheme::Dirichlet { alpha: 0.1 },
        PartitionScheme::Dirichlet { alpha: 1.0 },
        PartitionScheme::LabelShards { shards_per_node: 2 },
    ] {
        let shards = partition(&data.train, &membership, scheme, 0)?;
        println!("\n{scheme:?}");
        for shard in shards.values().take(4) {
            println!(
                "  {:>4}: {:>4} points {:?}",
                shard.node.as_str(),
                shard.data.len(),
                shard.data.class_counts()
            );
        }
        let total: usize = shards.values().map(|s| s.data.len()).sum();
        println!("  every point assigned once: {}", total == data.train.len());
    }
    Ok(())
}
