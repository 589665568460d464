//! Parameter and FLOP counts of the reference architectures and of the
//! depth series, with the largest layers of one network.
//!
//! cargo run --release --example model_costs

use bregnext::network::{build_network, config_by_name, count_flops, count_parameters, depth_config, BuildOptions, Model, DEPTH_SERIES, TABLE2_NAMES};

fn main() -> bregnext::Result<()> {
    println!("{:<14} {:>12} {:>16}", "network", "parameters", "flops@64x64");
    for name in TABLE2_NAMES {
        let m: Model<f32> = build_network(&config_by_name(name)?, &BuildOptions::default())?;
        println!("{:<14} {:>12} {:>16}", name, count_parameters(&m).parameters, count_flops(&m, 64, 64)?.flops);
    }
    println!();
    let mut prev = None;
    for d in DEPTH_SERIES {
        let m: Model<f32> = build_network(&depth_config(d)?, &BuildOptions::default())?;
        let n = count_parameters(&m).parameters;
        let delta = prev.map_or(String::new(), |p| format!("+{}", n - p));
        println!("BReG-NeXt-{d:<4} {n:>12} {delta:>10}");
        prev = Some(n);
    }

    let m: Model<f32> = build_network(&config_by_name("BReG-NeXt-50")?, &BuildOptions::default())?;
    let mut layers = count_parameters(&m).layers;
    layers.sort_by_key(|l| std::cmp::Reverse(l.parameters));
    println!("\nlargest BReG-NeXt-50 parameter groups:");
    for l in layers.iter().take(5) {
        println!("  {:<24} {:>8}", l.name, l.parameters);
    }
    Ok(())
}
