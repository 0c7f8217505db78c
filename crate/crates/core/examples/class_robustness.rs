//! All-node noise on one input: exact counts while the joint grid fits the
//! budget, seeded Monte-Carlo with a Wilson interval above it.
//!
//! ```bash
//! cargo run --release --example class_robustness
//! ```

use nodebias::model::{Activation, Layer, Network};
use nodebias::perturb::{preserve_all_nodes_levels, EngineConfig, NoiseSweep, Polarity, SeedInput, Target};

fn main() -> nodebias::Result<()> {
    // label 1 iff x0 + x1 + x2 > 0.3
    let hidden = Layer::new(vec![vec![1.0, 1.0, 1.0]], vec![-0.3], Activation::Relu)?;
    let out = Layer::new(vec![vec![0.0], vec![1.0]], vec![1e-9, 0.0], Activation::Identity)?;
    let net = Network::new(vec![hidden, out])?;
    let seed = SeedInput::new(&net, "p", vec![0.4, 0.3, 0.2], 1)?;

    let sweep = NoiseSweep::new(0.05, 12, Polarity::Symmetric, Target::AllNodes)?;
    let engine = EngineConfig { budget: 5_000, mc_samples: 20_000, mc_seed: 7 };
    for (i, o) in preserve_all_nodes_levels(&net, &seed, &sweep, &engine)?.iter().enumerate() {
        let ci = o.interval.map_or(String::new(), |w| format!(" [{:.4}, {:.4}]", w.lower, w.upper));
        println!(
            "level {:>2} ({:>6} points): {:>6}/{:<6} = {:.4} {}{ci}",
            i + 1,
            sweep.joint_size(i as u32 + 1, 3).unwrap_or(u64::MAX),
            o.count.preserved,
            o.count.total,
            o.count.probability(),
            o.method.as_str()
        );
    }
    Ok(())
}
