//! Runs prepare, train, analyze and plot on a small synthetic config and
//! lists what was written.
//!
//! ```bash
//! cargo run --release --example pipeline -- out/example
//! ```

use std::path::PathBuf;

use nodebias::data::SynthConfig;
use nodebias::report::{run_all, DatasetSource, ExperimentConfig, SyntheticSource};

fn main() -> nodebias::Result<()> {
    let out = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/example"));

    let mut cfg = ExperimentConfig::with_source(DatasetSource::Synthetic(SyntheticSource {
        config: SynthConfig::default(),
        test_head_count: 10,
        test_tail_count: 6,
    }));
    cfg.seeds = vec![0, 1, 2];
    cfg.sweep.max_level = 4;
    cfg.output_dir = out.clone();
    run_all(&cfg)?;

    let mut files: Vec<PathBuf> = Vec::new();
    let mut stack = vec![out.clone()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).map_err(|e| nodebias::Error::io(&dir, e))? {
            let p = e.map_err(|e| nodebias::Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
