//! Reference implementations used as oracles. Written against the public
//! accessors only, with plain nested loops and no shared helpers.
#![allow(dead_code)]

use nodebias::data::Dataset;
use nodebias::model::{Activation, Layer, Network};
use nodebias::perturb::Polarity;
use nodebias::rng::SplitMix64;

/// Plain forward pass: ReLU on hidden layers, identity on the last,
/// first maximal logit wins.
pub fn oracle_label(net: &Network, x: &[f64]) -> usize {
    let act = oracle_logits(net, x);
    let mut best = 0;
    for i in 1..act.len() {
        if act[i] > act[best] {
            best = i;
        }
    }
    best
}

pub fn oracle_logits(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut act: Vec<f64> = x.to_vec();
    let last = net.layers().len() - 1;
    for (li, layer) in net.layers().iter().enumerate() {
        let mut next = vec![0.0; layer.out_dim()];
        for (r, slot) in next.iter_mut().enumerate() {
            let mut s = 0.0;
            for (c, a) in act.iter().enumerate() {
                s += layer.weight(r, c) * a;
            }
            s += layer.bias()[r];
            *slot = if li < last && s < 0.0 { 0.0 } else { s };
        }
        act = next;
    }
    act
}

/// Offset multipliers admitted at `level` (never zero).
pub fn oracle_multipliers(p: Polarity, level: u32) -> Vec<i64> {
    let t = i64::from(level);
    match p {
        Polarity::Positive => (1..=t).collect(),
        Polarity::Negative => (1..=t).map(|j| -j).collect(),
        Polarity::Symmetric => (1..=t).flat_map(|j| [-j, j]).collect(),
    }
}

pub fn oracle_single(net: &Network, x: &[f64], node: usize, p: Polarity, level: u32, step: f64) -> (u64, u64) {
    let base = oracle_label(net, x);
    let mut kept = 0;
    let mut total = 0;
    for j in oracle_multipliers(p, level) {
        let mut y = x.to_vec();
        y[node] = x[node] + j as f64 * step;
        total += 1;
        if oracle_label(net, &y) == base {
            kept += 1;
        }
    }
    (kept, total)
}

pub fn oracle_joint(net: &Network, x: &[f64], p: Polarity, level: u32, step: f64) -> (u64, u64) {
    let base = oracle_label(net, x);
    let m = oracle_multipliers(p, level);
    let n = x.len();
    let mut idx = vec![0usize; n];
    let mut kept = 0;
    let mut total = 0;
    loop {
        let y: Vec<f64> = (0..n).map(|i| x[i] + m[idx[i]] as f64 * step).collect();
        total += 1;
        if oracle_label(net, &y) == base {
            kept += 1;
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < m.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            return (kept, total);
        }
    }
}

/// Random ReLU network `inputs → hidden → classes` with weights in [-1, 1].
pub fn random_net(rng: &mut SplitMix64, inputs: usize, hidden: usize, classes: usize) -> Network {
    let mut mat = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect()
    };
    let w1 = mat(hidden, inputs);
    let b1 = mat(1, hidden).remove(0);
    let w2 = mat(classes, hidden);
    let b2 = mat(1, classes).remove(0);
    Network::new(vec![
        Layer::new(w1, b1, Activation::Relu).unwrap(),
        Layer::new(w2, b2, Activation::Identity).unwrap(),
    ])
    .unwrap()
}

pub fn random_point(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

/// One input, two classes: label 1 iff `x > 0` (a tie at 0 goes to class 0).
pub fn threshold_net() -> Network {
    let l = Layer::new(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0], Activation::Identity).unwrap();
    Network::new(vec![l]).unwrap()
}

/// Hand-enumerated `(preserved, total)` for [`threshold_net`] with step 0.1,
/// levels 1 to 5. At x = 0.25 only offsets of -0.3 and below cross zero; at
/// x = -0.35 offsets of +0.4 and above do.
#[rustfmt::skip]
pub const THRESHOLD_TABLE: [(f64, usize, Polarity, [(u64, u64); 5]); 6] = [
    (0.25, 1, Polarity::Positive,  [(1, 1), (2, 2), (3, 3), (4, 4), (5, 5)]),
    (0.25, 1, Polarity::Negative,  [(1, 1), (2, 2), (2, 3), (2, 4), (2, 5)]),
    (0.25, 1, Polarity::Symmetric, [(2, 2), (4, 4), (5, 6), (6, 8), (7, 10)]),
    (-0.35, 0, Polarity::Positive,  [(1, 1), (2, 2), (3, 3), (3, 4), (3, 5)]),
    (-0.35, 0, Polarity::Negative,  [(1, 1), (2, 2), (3, 3), (4, 4), (5, 5)]),
    (-0.35, 0, Polarity::Symmetric, [(2, 2), (4, 4), (6, 6), (7, 8), (8, 10)]),
];

pub const POLARITIES: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Symmetric];

/// Mean cross-entropy plus `l2 / 2 * sum(w^2)` over weights, computed directly
/// from `log(sum(exp))` with a max shift.
pub fn oracle_loss(net: &Network, data: &Dataset, l2: f64) -> f64 {
    let mut total = 0.0;
    for r in data.rows() {
        let z = oracle_logits(net, &r.features);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[r.label];
    }
    let penalty: f64 = net.layers().iter().flat_map(|l| l.weights()).map(|w| w * w).sum();
    total / data.len() as f64 + 0.5 * l2 * penalty
}

/// Copy of `net` with one parameter replaced. `index` runs over the weights
/// of layer `layer` then its biases.
pub fn with_param(net: &Network, layer: usize, index: usize, value: f64) -> Network {
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let mut w = l.weights().to_vec();
            let mut b = l.bias().to_vec();
            if k == layer {
                if index < w.len() {
                    w[index] = value;
                } else {
                    b[index - w.len()] = value;
                }
            }
            Layer::from_flat(w, b, l.in_dim(), l.activation()).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

/// Central-difference gradient of [`oracle_loss`], flattened layer by layer
/// (weights then biases).
pub fn numeric_gradient(net: &Network, data: &Dataset, l2: f64, h: f64) -> Vec<f64> {
    let mut g = Vec::new();
    for (k, l) in net.layers().iter().enumerate() {
        let params: Vec<f64> = l.weights().iter().chain(l.bias()).copied().collect();
        for (i, p) in params.iter().enumerate() {
            let up = oracle_loss(&with_param(net, k, i, p + h), data, l2);
            let down = oracle_loss(&with_param(net, k, i, p - h), data, l2);
            g.push((up - down) / (2.0 * h));
        }
    }
    g
}

/// `|a - b| / max(|a|, |b|)` over whole vectors (0 when both are zero).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Linearly separable-ish two-class data drawn around `±center` on every axis.
pub fn blob_dataset(rng: &mut SplitMix64, n: usize, per_class: usize, center: f64) -> Dataset {
    let rows = (0..2 * per_class)
        .map(|i| {
            let label = i % 2;
            let sign = if label == 0 { -1.0 } else { 1.0 };
            nodebias::data::Row {
                id: format!("b{i}"),
                features: (0..n).map(|_| sign * center + rng.uniform(-1.0, 1.0)).collect(),
                label,
            }
        })
        .collect();
    Dataset::new(
        (0..n).map(|f| format!("x{f}")).collect(),
        vec!["neg".into(), "pos".into()],
        rows,
    )
    .unwrap()
}
