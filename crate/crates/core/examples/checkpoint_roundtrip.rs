//! Trains briefly, saves a checkpoint, reloads it and confirms the reloaded
//! model predicts bit-for-bit the same.
//!
//! cargo run --release --example checkpoint_roundtrip -- [path.bngx]

use bregnext::data::{load_checkpoint, save_checkpoint, synth_blobs};
use bregnext::network::{build_network, depth_config, BuildOptions, Model};
use bregnext::train::{train_epochs, TrainConfig};

fn main() -> bregnext::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("roundtrip.bngx").display().to_string());
    let data = synth_blobs(4, 8, 3)?.downsample(8)?;
    let mut model: Model<f32> = build_network(&depth_config(26)?.with_input(8, 8), &BuildOptions::default())?;
    let log = train_epochs(&mut model, &data, &TrainConfig { epochs: 2, batch_size: 16, ..Default::default() }, |_| {})?;
    save_checkpoint(&model, &log.lines(), &path)?;

    let restored = load_checkpoint(&path)?;
    let a = model.predict(&data.images)?;
    let b = restored.model.predict(&data.images)?;
    let identical = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    println!("saved {path} ({} bytes)", std::fs::metadata(&path)?.len());
    println!("architecture {}, {} log lines kept", restored.model.config.name, restored.log_tail.len());
    println!("first unit mapping {:?}", restored.model.mapping_params()[0]);
    println!("predictions identical: {identical}");
    Ok(())
}
