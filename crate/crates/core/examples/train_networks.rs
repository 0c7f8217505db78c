//! Trains five seeded networks on the synthetic long-tail data and reports
//! per-class test accuracy.
//!
//! ```bash
//! cargo run --release --example train_networks
//! ```

use nodebias::data::{normalize_apply, normalize_fit, synth_longtail_with_test, SynthConfig};
use nodebias::model::validate_model;
use nodebias::train::{train_runs, TrainConfig};

fn main() -> nodebias::Result<()> {
    let (train, test) = synth_longtail_with_test(&SynthConfig::default(), 20, 14)?;
    let nz = normalize_fit(&train)?;
    let (train, test) = (normalize_apply(&nz, &train)?, normalize_apply(&nz, &test)?);

    let runs = train_runs(&train, &TrainConfig::default(), &[0, 1, 2, 3, 4])?;
    for run in &runs.runs {
        let v = validate_model(&run.network, &test)?;
        println!(
            "seed {}: train acc {:.3}, test acc {:.3}, per class {:?}/{:?}",
            run.seed, run.train_summary.accuracy, v.accuracy, v.class_correct, v.class_rows
        );
    }
    Ok(())
}
