//! Compares reverse-mode gradients with central finite differences in f64
//! for the mappings, every primitive and a whole small network.
//!
//! cargo run --release --example gradient_check -- [arch]

use bregnext::checks::{run_suite, SuiteOptions};

fn main() -> bregnext::Result<()> {
    let arch = std::env::args().nth(1).unwrap_or_else(|| "BReG-NeXt-26".into());
    let opts = SuiteOptions { arch: Some(arch), ..Default::default() };
    for r in run_suite(&opts)? {
        println!(
            "{:<5} {:<20} max rel error {:.2e} over {} coordinates {}",
            if r.passed(1e-3) { "ok" } else { "FAIL" },
            r.name,
            r.max_rel_error,
            r.probed,
            r.note
        );
    }
    Ok(())
}
