//! Writes a PRISM DTMC for one noise cell, parses it back and solves the
//! reachability query exactly.
//!
//! ```bash
//! cargo run --example dtmc_export -- /tmp/cell.pm
//! ```

use std::path::PathBuf;

use nodebias::model::{Activation, Layer, Network};
use nodebias::perturb::{export_dtmc, parse_dtmc, parse_props, NoiseSweep, Polarity, SeedInput, Target};

fn main() -> nodebias::Result<()> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nodebias_cell.pm"));

    let l = Layer::new(vec![vec![-1.0, 0.5], vec![1.0, -0.5]], vec![0.0, 0.0], Activation::Identity)?;
    let net = Network::new(vec![l])?;
    let seed = SeedInput::new(&net, "row7", vec![0.3, 0.1], 1)?;
    let sweep = NoiseSweep::new(0.1, 3, Polarity::Symmetric, Target::AllNodes)?;

    let count = export_dtmc(&net, &seed, &sweep, 3, 10_000, &path)?;
    let model = parse_dtmc(&std::fs::read_to_string(&path).map_err(|e| nodebias::Error::io(&path, e))?)?;
    let props_path = path.with_extension("props");
    let label = parse_props(&std::fs::read_to_string(&props_path).map_err(|e| nodebias::Error::io(&props_path, e))?)?;
    let p = model.eventually(&label)?;
    println!("wrote {} and {}", path.display(), props_path.display());
    println!("engine {}/{}, model checker {p}", count.preserved, count.total);
    Ok(())
}
