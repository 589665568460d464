//! Writes per-layer activation grids of one synthetic image as PNG files.
//!
//! cargo run --release --example feature_maps -- [out_dir]

use bregnext::data::{dump_feature_maps, synth_blobs};
use bregnext::network::{build_network, depth_config, BuildOptions, Model};
use bregnext::train::{train_epochs, TrainConfig};

fn main() -> bregnext::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "feature_maps".into());
    let data = synth_blobs(8, 4, 5)?.downsample(2)?;
    let mut model: Model<f32> = build_network(&depth_config(26)?.with_input(32, 32), &BuildOptions::default())?;
    // one short epoch so inference has batch-norm statistics
    train_epochs(&mut model, &data, &TrainConfig { epochs: 1, batch_size: 16, ..Default::default() }, |_| {})?;
    let image = data.images.slice_batch(0, 1);
    let last = model.layer_count();
    for path in dump_feature_maps(&model, &image, &[1, 2, last / 2, last], &out)? {
        println!("{}", path.display());
    }
    Ok(())
}
