//! Trains full and head-truncated networks, builds a bias report for each and
//! prints the class curves, bias scores and the levels where the weaker class
//! flips.
//!
//! ```bash
//! cargo run --release --example regime_comparison
//! ```

use nodebias::analysis::{build_report, compare_regimes, SweepSettings};
use nodebias::data::{normalize_apply, normalize_fit, synth_longtail_with_test, truncate_to_balance, SynthConfig};
use nodebias::train::{train_runs, TrainConfig};

fn main() -> nodebias::Result<()> {
    let (raw, test) = synth_longtail_with_test(&SynthConfig::default(), 20, 14)?;
    let nz = normalize_fit(&raw)?;
    let train = normalize_apply(&nz, &raw)?;
    let test = normalize_apply(&nz, &test)?;
    let truncated = truncate_to_balance(&train, 0)?;

    let seeds = [0, 1, 2];
    let settings = SweepSettings { max_level: 6, ..SweepSettings::default() };
    let cfg = TrainConfig::default();
    let full = build_report("full", &train_runs(&train, &cfg, &seeds)?, &raw, &test, &settings)?;
    let trunc = build_report("truncated", &train_runs(&truncated, &cfg, &seeds)?, &raw, &test, &settings)?;

    for r in [&full, &trunc] {
        println!("{} regime, all-node class curve:", r.regime);
        for p in &r.class_curve.averaged.points {
            let probs: Vec<String> = p
                .classes
                .iter()
                .map(|c| c.probability.map_or("-".into(), |v| format!("{v:.4}")))
                .collect();
            println!("  magnitude {:.2}: {}", p.magnitude, probs.join("  "));
        }
        println!("  class bias score {:.4}", r.scores[0].score);
    }

    let cmp = compare_regimes(&full, &trunc)?;
    for s in &cmp.scores {
        println!("{:<10} {:<8} full {:.4} truncated {:.4}", s.target.label(), s.polarity.as_str(), s.full, s.truncated);
    }
    let flips = cmp.levels.iter().filter(|l| l.flipped).count();
    println!("{flips} of {} (curve, level) cells flip the weaker class", cmp.levels.len());
    Ok(())
}
