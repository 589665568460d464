//! Tabulates the adaptive bypass mapping at its four reference settings and
//! the fixed mappings, as `x,H,Hprime` CSV blocks.
//!
//! cargo run --example mapping_curves

use bregnext::mapping::{linspace, mapping_curve, CurvePreset, MappingKind, MappingParams};

fn main() -> bregnext::Result<()> {
    let grid = linspace(-4.0, 4.0, 9);
    for preset in [CurvePreset::A, CurvePreset::B, CurvePreset::C, CurvePreset::D] {
        let p = preset.params();
        println!("# adaptive {preset:?}: alpha {:e} beta {}", p.alpha, p.beta);
        for pt in mapping_curve(MappingKind::Adaptive, p, &grid)? {
            println!("{:5.1},{:9.5},{:8.5}", pt.x, pt.h, pt.h_prime);
        }
    }
    for kind in [MappingKind::LambdaScaled { lambda: 1.1 }, MappingKind::Arctan, MappingKind::XArctanLog, MappingKind::LogExp { alpha: 1.0 }] {
        println!("# {}", kind.name());
        for pt in mapping_curve(kind, MappingParams::default(), &grid)? {
            println!("{:5.1},{:9.5},{:8.5}", pt.x, pt.h, pt.h_prime);
        }
    }
    Ok(())
}
