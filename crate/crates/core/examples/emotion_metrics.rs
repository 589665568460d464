//! Dimensional (valence/arousal) and categorical scoring of a toy set of
//! predictions.
//!
//! cargo run --example emotion_metrics

use bregnext::metrics::{ccc, ClassReport, DimensionalReport};

fn main() -> bregnext::Result<()> {
    let truth = [-1.0, 0.0, 1.0];
    let shifted: Vec<f64> = truth.iter().map(|v| v + 1.0).collect();
    println!("CCC of a perfectly correlated but shifted series: {:.6}", ccc(&shifted, &truth)?);

    // interleaved (valence, arousal) rows
    let truth_va = [0.8, 0.5, -0.6, 0.6, -0.7, -0.3, 0.3, -0.6, 0.0, 0.8, -0.2, -0.8];
    let pred_va = [0.6, 0.4, -0.5, 0.7, -0.4, -0.1, 0.1, -0.5, 0.1, 0.6, 0.1, -0.7];
    let report = DimensionalReport::compute(&pred_va, &truth_va)?;
    print!("\n{}", report.to_key_value());

    let names: Vec<String> = ["neutral", "happy", "sad"].iter().map(|s| s.to_string()).collect();
    let truth_c = [0, 0, 1, 1, 1, 2, 2, 2, 2, 0];
    let pred_c = [0, 1, 1, 1, 1, 2, 0, 2, 2, 0];
    let classes = ClassReport::compute(&pred_c, &truth_c, 3)?;
    print!("\n{}", classes.to_key_value());
    print!("\n{}", classes.to_csv(&names));
    print!("\n{}", classes.confusion_csv(&names));
    Ok(())
}
