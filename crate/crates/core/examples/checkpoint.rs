//! Models as flat parameter vectors: averaging, wire size and checkpoints.
//!
//!     cargo run --example checkpoint

use plexus::learning::ModelFamily;
use plexus::model::{average_models, model_size_bytes, read_checkpoint, write_checkpoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let family = ModelFamily::Mlp {
        d_in: 32,
        hidden: 64,
        classes: 10,
    };
    let models: Vec<_> = (0..3).map(|seed| family.init(seed)).collect();
    let avg = average_models(&models)?;
    println!(
        "{} parameters, {} bytes on the wire",
        avg.dim(),
        model_size_bytes(&avg)
    );

    let path = std::env::temp_dir().join("plexus-model.ckpt");
    write_checkpoint(&path, &avg)?;
    let back = read_checkpoint(&path)?;
    println!(
        "checkpoint {} ({} bytes) round-trips exactly: {}",
        path.display(),
        std::fs::metadata(&path)?.len(),
        back == avg
    );
    Ok(())
}
