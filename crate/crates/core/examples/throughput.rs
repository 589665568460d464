//! Times one training step (forward + backward) of a network at a few input sizes.
//!
//! cargo run --release --example throughput -- [arch] [batch]

use std::time::Instant;

use bregnext::loss::one_hot;
use bregnext::network::{build_network, config_by_name, BuildOptions, Model};
use bregnext::{Mode, Session, Tensor};

fn main() -> bregnext::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arch = args.get(1).map_or("BReG-NeXt-26", String::as_str);
    let batch: usize = args.get(2).and_then(|b| b.parse().ok()).unwrap_or(64);
    for side in [16, 32, 64] {
        let cfg = config_by_name(arch)?.with_input(side, side);
        let mut model: Model<f32> = build_network(&cfg, &BuildOptions::default())?;
        let images = Tensor::full([batch, side, side, 3], 0.1f32);
        let labels: Vec<usize> = (0..batch).map(|i| i % 8).collect();
        let feeds = model.feeds(images, one_hot(&labels, 8)?);
        let graph = model.graph.clone();
        let mut session = Session::new(&graph);
        let start = Instant::now();
        session.forward(&mut model.store, &feeds, &[model.loss], Mode::Train)?;
        let fwd = start.elapsed();
        session.backward(model.loss, &mut model.store)?;
        let total = start.elapsed();
        println!("{arch} {side}x{side} batch {batch}: forward {fwd:.2?}, forward+backward {total:.2?}");
    }
    Ok(())
}
