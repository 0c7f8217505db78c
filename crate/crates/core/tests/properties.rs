mod common;

use std::collections::BTreeSet;

use common::*;
use nodebias::analysis::*;
use nodebias::data::*;
use nodebias::model::{Activation, Layer, Network};
use nodebias::perturb::*;
use nodebias::rng::SplitMix64;
use nodebias::train::RunSet;
use num_rational::BigRational;
use proptest::prelude::*;

fn polarity() -> impl Strategy<Value = Polarity> {
    prop::sample::select(POLARITIES.to_vec())
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    datasets(2..4)
}

fn datasets(classes: std::ops::Range<usize>) -> impl Strategy<Value = Dataset> {
    (1usize..5, classes, 6usize..40, any::<u64>()).prop_map(|(n, c, rows, seed)| {
        let mut rng = SplitMix64::new(seed);
        let rows: Vec<Row> = (0..rows)
            .map(|i| Row {
                id: format!("r{i}"),
                // Every class gets at least two rows so split and variance are defined.
                label: if i < 2 * c { i % c } else { rng.below(c as u64) as usize },
                features: (0..n).map(|_| rng.uniform(-50.0, 50.0)).collect(),
            })
            .collect();
        Dataset::new(
            (0..n).map(|f| format!("f{f}")).collect(),
            (0..c).map(|k| format!("c{k}")).collect(),
            rows,
        )
        .unwrap()
    })
}

fn ids(ds: &Dataset) -> BTreeSet<String> {
    ds.rows().iter().map(|r| r.id.clone()).collect()
}

fn permuted(net: &Network, perm: &[usize]) -> Network {
    // Column c of the new first layer is column perm[c] of the old one.
    let first = &net.layers()[0];
    let rows: Vec<Vec<f64>> = (0..first.out_dim())
        .map(|r| perm.iter().map(|&p| first.weight(r, p)).collect())
        .collect();
    let mut layers = vec![Layer::new(rows, first.bias().to_vec(), first.activation()).unwrap()];
    layers.extend(net.layers()[1..].iter().cloned());
    Network::new(layers).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifting_output_bias_keeps_labels(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut rng = SplitMix64::new(seed);
        let net = random_net(&mut rng, 3, 5, 3);
        let last = &net.layers()[1];
        let rows: Vec<Vec<f64>> = (0..3).map(|r| last.row(r).to_vec()).collect();
        // Dyadic shift so that logit + shift is exact and no tie can move.
        let shift = (shift * 8.0).round() / 8.0;
        let bias: Vec<f64> = last.bias().iter().map(|b| b + shift).collect();
        let shifted = Network::new(vec![
            net.layers()[0].clone(),
            Layer::new(rows, bias, Activation::Identity).unwrap(),
        ]).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, 3);
            let a = net.forward(&x).unwrap();
            let b = shifted.forward(&x).unwrap();
            let gap = {
                let mut l = a.logits.clone();
                l.sort_by(|p, q| q.total_cmp(p));
                l[0] - l[1]
            };
            if gap > 1e-9 {
                prop_assert_eq!(a.label, b.label);
            }
        }
    }

    #[test]
    fn levels_are_nested(seed in any::<u64>(), pol in polarity(), step in 0.02f64..0.4) {
        let mut rng = SplitMix64::new(seed);
        let net = random_net(&mut rng, 3, 4, 2);
        let x = random_point(&mut rng, 3);
        let s = SeedInput::new(&net, "x", x.clone(), net.classify(&x)).unwrap();
        let sweep = NoiseSweep::new(step, 5, pol, Target::AllNodes).unwrap();
        let joint = preserve_all_nodes_levels(&net, &s, &sweep, &EngineConfig::default()).unwrap();
        for w in joint.windows(2) {
            let (a, b) = (w[0].count, w[1].count);
            prop_assert!(a.total < b.total);
            prop_assert!(a.preserved <= b.preserved);
            prop_assert!(a.total - a.preserved <= b.total - b.preserved);
        }
        for t in 1..5 {
            let g = grid(&sweep, t).unwrap();
            let h = grid(&sweep, t + 1).unwrap();
            prop_assert!(g.iter().all(|v| h.contains(v)));
            prop_assert!(!g.contains(&0.0));
        }
        for node in 0..3 {
            let single = preserve_single_node_levels(&net, &s, node, &sweep).unwrap();
            for w in single.windows(2) {
                prop_assert!(w[0].preserved <= w[1].preserved);
                prop_assert!(w[0].total - w[0].preserved <= w[1].total - w[1].preserved);
            }
        }
    }

    #[test]
    fn input_permutation_is_equivariant(seed in any::<u64>(), pol in polarity()) {
        let mut rng = SplitMix64::new(seed);
        let net = random_net(&mut rng, 3, 5, 2);
        let x = random_point(&mut rng, 3);
        let mut perm = vec![0, 1, 2];
        rng.shuffle(&mut perm);
        let pnet = permuted(&net, &perm);
        let px: Vec<f64> = perm.iter().map(|&p| x[p]).collect();
        let s = SeedInput::new(&net, "x", x.clone(), net.classify(&x)).unwrap();
        let ps = SeedInput::new(&pnet, "x", px.clone(), pnet.classify(&px)).unwrap();
        prop_assert_eq!(s.class_label, ps.class_label);
        let sweep = NoiseSweep::new(0.1, 3, pol, Target::AllNodes).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(
                preserve_single_node(&pnet, &ps, new, &sweep, 3).unwrap(),
                preserve_single_node(&net, &s, old, &sweep, 3).unwrap()
            );
        }
        prop_assert_eq!(
            exact_count(&pnet, &ps, &sweep, 3, 1_000).unwrap(),
            exact_count(&net, &s, &sweep, 3, 1_000).unwrap()
        );
    }

    #[test]
    fn one_input_joint_equals_single(seed in any::<u64>(), pol in polarity(), level in 1u32..9) {
        let mut rng = SplitMix64::new(seed);
        let net = random_net(&mut rng, 1, 4, 2);
        let x = random_point(&mut rng, 1);
        let s = SeedInput::new(&net, "x", x.clone(), net.classify(&x)).unwrap();
        let sweep = NoiseSweep::new(0.15, level, pol, Target::AllNodes).unwrap();
        prop_assert_eq!(
            exact_count(&net, &s, &sweep, level, 100).unwrap(),
            preserve_single_node(&net, &s, 0, &sweep, level).unwrap()
        );
    }

    #[test]
    fn truncation_balances_with_a_subset(ds in dataset_strategy(), seed in any::<u64>()) {
        let t = truncate_to_balance(&ds, seed).unwrap();
        let counts = t.class_counts();
        let smallest = *ds.class_counts().iter().min().unwrap();
        prop_assert!(counts.iter().all(|&c| c == smallest));
        prop_assert!(ids(&t).is_subset(&ids(&ds)));
        // The smallest class is kept whole.
        let small_class = ds.class_counts().iter().position(|&c| c == smallest).unwrap();
        let kept: BTreeSet<String> = t.rows().iter().filter(|r| r.label == small_class).map(|r| r.id.clone()).collect();
        let all: BTreeSet<String> = ds.rows().iter().filter(|r| r.label == small_class).map(|r| r.id.clone()).collect();
        prop_assert_eq!(kept, all);
        prop_assert_eq!(truncate_to_balance(&ds, seed).unwrap(), t);
    }

    #[test]
    fn split_partitions_rows(ds in dataset_strategy(), seed in any::<u64>(), frac in 0.3f64..0.7) {
        let spec = SplitSpec { train_fraction: frac, seed, stratified: true };
        match split(&ds, &spec) {
            Ok((train, test)) => {
                let a = ids(&train);
                let b = ids(&test);
                prop_assert!(a.is_disjoint(&b));
                prop_assert_eq!(a.union(&b).cloned().collect::<BTreeSet<_>>(), ids(&ds));
                for (c, &n) in ds.class_counts().iter().enumerate() {
                    prop_assert_eq!(train.class_counts()[c], (frac * n as f64).round() as usize);
                }
            }
            Err(e) => prop_assert!(matches!(e, nodebias::Error::Data(_))),
        }
    }

    #[test]
    fn ranking_ignores_positive_affine_rescaling(ds in datasets(2..3), a in 0.5f64..4.0, b in -3.0f64..3.0) {
        let k = ds.feature_count();
        let scaled = Dataset::new(
            ds.feature_names().to_vec(),
            ds.class_names().to_vec(),
            ds.rows().iter().map(|r| Row {
                id: r.id.clone(),
                label: r.label,
                features: r.features.iter().map(|v| a * v + b).collect(),
            }).collect(),
        ).unwrap();
        let s1 = welch_scores(&ds).unwrap();
        let s2 = welch_scores(&scaled).unwrap();
        for (x, y) in s1.iter().zip(&s2) {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{} vs {}", x, y);
        }
        let r = rank_features(&ds, k).unwrap();
        let mut sorted = r.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..k).collect::<Vec<_>>());
        let separated = s1.iter().enumerate().all(|(i, x)| {
            s1.iter().skip(i + 1).all(|y| (x - y).abs() > 1e-4 * x.abs().max(1.0))
        });
        if separated {
            prop_assert_eq!(rank_features(&scaled, k).unwrap(), r);
        }
    }

    #[test]
    fn variance_matches_two_pass(ds in dataset_strategy()) {
        let table = variance_table(&ds).unwrap();
        for f in 0..ds.feature_count() {
            for c in 0..ds.class_count() {
                let vals: Vec<f64> = ds.rows().iter().filter(|r| r.label == c).map(|r| r.features[f]).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                let got = table.variance[f][c].unwrap();
                prop_assert!((got - var).abs() <= 1e-9 * var.max(1.0), "{} vs {}", got, var);
            }
        }
    }

    #[test]
    fn normalization_round_trips(ds in dataset_strategy()) {
        let nz = normalize_fit(&ds).unwrap();
        for r in ds.rows() {
            let back = nz.invert_vec(&nz.apply_vec(&r.features));
            for (x, y) in r.features.iter().zip(&back) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
        let z = normalize_apply(&nz, &ds).unwrap();
        let again = normalize_fit(&z).unwrap();
        for f in 0..ds.feature_count() {
            prop_assert!(again.mean[f].abs() < 1e-9);
        }
    }
}

/// A tiny two-network run set over a 2-feature test set.
fn tiny_report(regime: &str) -> (BiasReport, Dataset) {
    let mut rng = SplitMix64::new(11);
    let nets = vec![(0, random_net(&mut rng, 2, 4, 2)), (1, random_net(&mut rng, 2, 4, 2))];
    let rows: Vec<Row> = (0..16)
        .map(|i| {
            let features = random_point(&mut rng, 2);
            Row { id: format!("t{i}"), label: nets[0].1.classify(&features), features }
        })
        .collect();
    let mut rows = rows;
    rows[0].label = 0;
    rows[1].label = 1;
    let test = Dataset::new(vec!["a".into(), "b".into()], vec!["p".into(), "q".into()], rows).unwrap();
    let rs = RunSet::from_networks(nets, &test, Default::default()).unwrap();
    let settings = SweepSettings { step: 0.2, max_level: 3, ..SweepSettings::default() };
    (build_report(regime, &rs, &test, &test, &settings).unwrap(), test)
}

#[test]
fn curve_points_are_means_of_seed_ratios() {
    let (report, _) = tiny_report("full");
    for bundle in std::iter::once(&report.class_curve).chain(&report.node_curves) {
        for (li, point) in bundle.averaged.points.iter().enumerate() {
            for (c, cell) in point.classes.iter().enumerate() {
                let mut per_net = Vec::new();
                for nc in &bundle.per_network {
                    let ratios: Vec<BigRational> = nc
                        .seeds
                        .iter()
                        .filter(|s| s.class == c)
                        .map(|s| {
                            let k = s.counts[li].0;
                            BigRational::new(k.preserved.into(), k.total.into())
                        })
                        .collect();
                    if !ratios.is_empty() {
                        let n = BigRational::from_integer(ratios.len().into());
                        per_net.push(ratios.into_iter().fold(BigRational::from_integer(0.into()), |a, b| a + b) / n);
                    }
                }
                let want = if per_net.is_empty() {
                    None
                } else {
                    let n = BigRational::from_integer(per_net.len().into());
                    Some(per_net.into_iter().fold(BigRational::from_integer(0.into()), |a, b| a + b) / n)
                };
                assert_eq!(cell.exact, want);
                if let Some(p) = cell.probability {
                    assert!((0.0..=1.0).contains(&p));
                }
            }
        }
    }
    for s in &report.scores {
        assert!((0.0..=1.0).contains(&s.score));
    }
}

#[test]
fn comparing_a_report_with_itself_is_zero() {
    let (a, _) = tiny_report("full");
    let (b, _) = tiny_report("truncated");
    let cmp = compare_regimes(&a, &b).unwrap();
    assert!(cmp.levels.iter().all(|l| l.delta.iter().all(|d| d.is_none_or(|v| v == 0.0)) && !l.flipped));
    assert!(cmp.scores.iter().all(|s| s.delta == 0.0));
}

#[test]
fn mismatched_step_is_rejected() {
    let (a, _) = tiny_report("full");
    let (mut b, _) = tiny_report("truncated");
    b.settings.step = 0.1;
    assert!(matches!(compare_regimes(&a, &b), Err(nodebias::Error::Config(_))));
}

#[test]
fn identical_class_curves_score_zero() {
    let (report, _) = tiny_report("full");
    let mut curve = report.class_curve.averaged.clone();
    for p in &mut curve.points {
        let first = p.classes[0].clone();
        p.classes[1] = first;
    }
    let s = bias_score(&curve).unwrap();
    assert_eq!(s.score, 0.0);
    curve.points[1].classes[1].exact = Some(BigRational::new(1.into(), 3.into()));
    curve.points[1].classes[0].exact = Some(BigRational::new(2.into(), 3.into()));
    assert!(bias_score(&curve).unwrap().score > 0.0);
}
