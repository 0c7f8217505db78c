//! Synthesizes a 27/11 long-tail dataset, ranks features by Welch score,
//! splits it, truncates the head class and fits a normalizer.
//!
//! ```bash
//! cargo run --example prepare_data
//! ```

use nodebias::data::{
    normalize_apply, normalize_fit, rank_features, split, synth_longtail, truncate_to_balance, welch_scores,
    SplitSpec, SynthConfig,
};

fn main() -> nodebias::Result<()> {
    let ds = synth_longtail(&SynthConfig { n_features: 8, ..SynthConfig::default() })?;
    println!("{} rows, class counts {:?}", ds.len(), ds.class_counts());

    let scores = welch_scores(&ds)?;
    let top = rank_features(&ds, 3)?;
    for (i, s) in scores.iter().enumerate() {
        let mark = if top.contains(&i) { "*" } else { " " };
        println!("{mark} {:<4} welch {s:.3}", ds.feature_names()[i]);
    }
    let ds = ds.select_features(&top)?;

    let (train, test) = split(&ds, &SplitSpec::default())?;
    let truncated = truncate_to_balance(&train, 0)?;
    println!(
        "train {:?}, test {:?}, truncated {:?}",
        train.class_counts(),
        test.class_counts(),
        truncated.class_counts()
    );

    let nz = normalize_fit(&train)?;
    let normalized = normalize_apply(&nz, &test)?;
    println!("first normalized test row: {:?}", normalized.rows()[0].features);
    Ok(())
}
