//! Per-class variance of raw feature values with the per-class extrema
//! flagged. Reads a CSV given on the command line, or synthesizes one.
//!
//! ```bash
//! cargo run --example variance_table -- data/train.csv
//! ```

use nodebias::analysis::variance_table;
use nodebias::data::{load_csv, synth_longtail, SynthConfig};

fn main() -> nodebias::Result<()> {
    let ds = match std::env::args().nth(1) {
        Some(path) => load_csv(path)?,
        None => synth_longtail(&SynthConfig { spread: 100.0, ..SynthConfig::default() })?,
    };
    let t = variance_table(&ds)?;
    print!("{:<10}", "feature");
    for c in &t.class_names {
        print!("{c:>16}");
    }
    println!();
    for (f, name) in t.feature_names.iter().enumerate() {
        print!("{name:<10}");
        for c in 0..t.class_names.len() {
            let mark = if t.is_min(f, c) { "v" } else if t.is_max(f, c) { "^" } else { " " };
            match t.variance[f][c] {
                Some(v) => print!("{v:>15.3}{mark}"),
                None => print!("{:>16}", "-"),
            }
        }
        println!();
    }
    println!("rows per class: {:?}", t.counts);
    Ok(())
}
