//! Class and split counts of a FER2013 CSV, compared with the published
//! histogram.
//!
//! cargo run --release --example fer2013_summary -- path/to/fer2013.csv

use bregnext::data::{scan_fer2013, FER2013_PAPER_COUNTS};

fn main() -> bregnext::Result<()> {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: fer2013_summary path/to/fer2013.csv");
        std::process::exit(1);
    };
    let summary = scan_fer2013(&path)?;
    println!("{:<10} {:>7} {:>10}", "class", "count", "published");
    for (name, published) in FER2013_PAPER_COUNTS {
        println!("{:<10} {:>7} {:>10}", name, summary.count_of(name).unwrap_or(0), published);
    }
    println!("train {} / validation {} / test {}", summary.train, summary.validation, summary.test);
    println!("total {}; matches published histogram: {}", summary.total(), summary.matches_published());
    Ok(())
}
