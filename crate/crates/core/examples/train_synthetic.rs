//! Trains a small network on the synthetic texture dataset and prints the
//! per-epoch log, then saves a checkpoint.
//!
//! cargo run --release --example train_synthetic -- [arch] [epochs] [downsample] [lr] [out.bngx]

use bregnext::data::{save_checkpoint, synth_blobs};
use bregnext::network::{build_network, config_by_name, BuildOptions, Model};
use bregnext::optim::LrSchedule;
use bregnext::train::{train_epochs, TrainConfig};

fn main() -> bregnext::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arch = args.get(1).map_or("BReG-NeXt-26", String::as_str);
    let epochs = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(30);
    let factor = args.get(3).and_then(|v| v.parse().ok()).unwrap_or(4);
    let lr = args.get(4).and_then(|v| v.parse().ok()).unwrap_or(1e-3);

    let data = synth_blobs(8, 200, 7)?.downsample(factor)?;
    let [h, w, _] = data.image_shape();
    let cfg = config_by_name(arch)?.with_input(h, w);
    let mut model: Model<f32> = build_network(&cfg, &BuildOptions { seed: 7, ..Default::default() })?;
    let schedule = LrSchedule { base: lr, ..Default::default() };
    let train = TrainConfig { epochs, batch_size: 64, seed: 7, schedule, ..Default::default() };

    let start = std::time::Instant::now();
    let log = train_epochs(&mut model, &data, &train, |r| {
        let drift = r.mappings.iter().map(|m| (m.alpha - 1.0).abs()).fold(0.0, f64::max);
        println!(
            "epoch {:2}  lr {:.2e}  loss {:.5}  acc {:.4}  max|α-1| {:.4}  [{:.0?}]",
            r.epoch,
            r.lr,
            r.loss,
            r.metric,
            drift,
            start.elapsed()
        );
    })?;
    if let Some(path) = args.get(5) {
        save_checkpoint(&model, &log.lines(), path)?;
        println!("saved {path}");
    }
    Ok(())
}
