//! Exact single-node preservation counts for one trained network and the
//! correctly classified test input closest to its decision boundary, for
//! every node, polarity and level.
//!
//! ```bash
//! cargo run --release --example node_sensitivity
//! ```

use nodebias::data::{normalize_apply, normalize_fit, synth_longtail_with_test, SynthConfig};
use nodebias::perturb::{preserve_single_node_levels, NoiseSweep, Polarity, SeedInput, Target};
use nodebias::train::{train_one, TrainConfig};

fn main() -> nodebias::Result<()> {
    let (train, test) = synth_longtail_with_test(&SynthConfig::default(), 20, 14)?;
    let nz = normalize_fit(&train)?;
    let (train, test) = (normalize_apply(&nz, &train)?, normalize_apply(&nz, &test)?);
    let net = train_one(&train, &TrainConfig::default())?;

    let margin = |x: &[f64]| {
        let z = net.forward(x).map(|p| p.logits).unwrap_or_default();
        (z[0] - z[1]).abs()
    };
    let row = test
        .rows()
        .iter()
        .filter(|r| net.classify(&r.features) == r.label)
        .min_by(|a, b| margin(&a.features).total_cmp(&margin(&b.features)))
        .expect("some test row is classified correctly");
    let seed = SeedInput::new(&net, row.id.clone(), row.features.clone(), row.label)?;
    println!("seed {} (class {}), correctly classified: {}", seed.id, seed.class_label, seed.correctly_classified);

    for pol in [Polarity::Negative, Polarity::Positive] {
        for node in 0..net.input_dim() {
            let sweep = NoiseSweep::new(0.1, 10, pol, Target::SingleNode(node))?;
            let counts = preserve_single_node_levels(&net, &seed, node, &sweep)?;
            let shown: Vec<String> = counts.iter().map(|c| format!("{}/{}", c.preserved, c.total)).collect();
            println!("{:<8} node {}: {}", pol.as_str(), node + 1, shown.join(" "));
        }
    }
    Ok(())
}
