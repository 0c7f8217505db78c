//! Full-batch gradient descent on softmax cross-entropy for single-hidden-layer
//! ReLU classifiers.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, validate_model, Activation, Layer, Network, ValidationSummary};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Training stops once training accuracy reaches this value.
    pub early_stop_at_train_accuracy: f64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: 10,
            learning_rate: 0.05,
            epochs: 2000,
            seed: 0,
            early_stop_at_train_accuracy: 1.0,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be a finite value >= 0".into()));
        }
        if !(self.early_stop_at_train_accuracy > 0.0 && self.early_stop_at_train_accuracy <= 1.0) {
            return Err(Error::Config(
                "early_stop_at_train_accuracy must lie in (0, 1]".into(),
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be a finite value >= 0".into()));
        }
        Ok(())
    }
}

/// He-uniform initialization: weights drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in))
/// in layer order, row-major; biases start at zero.
pub fn init_network(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Result<Network> {
    let mut rng = SplitMix64::new(seed);
    let mut layer = |fan_in: usize, fan_out: usize, act: Activation| {
        let limit = (6.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)).collect();
        Layer::from_flat(w, vec![0.0; fan_out], fan_in, act)
    };
    let hidden_layer = layer(inputs, hidden, Activation::Relu)?;
    let out = layer(hidden, classes, Activation::Identity)?;
    Network::new(vec![hidden_layer, out])
}

/// Gradients shaped like the network's parameters: `(d_weights, d_bias)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub accuracy: f64,
    pub gradients: Gradients,
}

/// Mean softmax cross-entropy over `data` plus `l2 / 2` times the squared
/// weights (biases excluded), with its gradient by backpropagation.
pub fn loss_and_gradients(net: &Network, data: &Dataset, l2: f64) -> LossEval {
    let layers = net.layers();
    let mut grads: Vec<(Vec<f64>, Vec<f64>)> = layers
        .iter()
        .map(|l| (vec![0.0; l.weights().len()], vec![0.0; l.out_dim()]))
        .collect();
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    // acts[0] is the input; acts[k + 1] the output of layer k.
    let mut acts: Vec<Vec<f64>> = std::iter::once(net.input_dim())
        .chain(layers.iter().map(Layer::out_dim))
        .map(|d| vec![0.0; d])
        .collect();
    for row in data.rows() {
        acts[0].copy_from_slice(&row.features);
        for (k, layer) in layers.iter().enumerate() {
            let (prev, next) = acts.split_at_mut(k + 1);
            layer.eval_into(&prev[k], &mut next[0]);
        }
        let logits = acts.last().unwrap();
        if argmax(logits) == row.label {
            correct += 1;
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|z| (z - m).exp()).sum();
        let lse = m + sum_exp.ln();
        loss += lse - logits[row.label];

        // delta for the readout: softmax - onehot, averaged over rows.
        let mut delta: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(c, z)| ((z - lse).exp() - if c == row.label { 1.0 } else { 0.0 }) / n)
            .collect();
        for k in (0..layers.len()).rev() {
            let layer = &layers[k];
            let input = &acts[k];
            let (gw, gb) = &mut grads[k];
            for (r, d) in delta.iter().enumerate() {
                gb[r] += d;
                let row = &mut gw[r * layer.in_dim()..(r + 1) * layer.in_dim()];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if k == 0 {
                break;
            }
            // Layer k - 1 is ReLU; its output is positive exactly where it was active.
            delta = (0..layer.in_dim())
                .map(|c| {
                    if input[c] > 0.0 {
                        delta.iter().enumerate().map(|(r, d)| d * layer.weight(r, c)).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }
    let mut penalty = 0.0;
    if l2 > 0.0 {
        for (layer, (gw, _)) in layers.iter().zip(grads.iter_mut()) {
            for (g, w) in gw.iter_mut().zip(layer.weights()) {
                penalty += w * w;
                *g += l2 * w;
            }
        }
    }
    LossEval {
        loss: loss / n + 0.5 * l2 * penalty,
        accuracy: correct as f64 / n,
        gradients: Gradients { layers: grads },
    }
}

/// Trains one network. The result carries the seed and the training set's
/// fingerprint in its metadata and is bit-reproducible for equal inputs.
pub fn train_one(train: &Dataset, cfg: &TrainConfig) -> Result<Network> {
    cfg.check()?;
    if let Some(c) = train.class_counts().iter().position(|&k| k == 0) {
        return Err(Error::Data(format!(
            "training set has no rows of class {:?}",
            train.class_names()[c]
        )));
    }
    let mut net = init_network(
        train.feature_count(),
        cfg.hidden_width,
        train.class_count(),
        cfg.seed,
    )?;
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        let eval = loss_and_gradients(&net, train, cfg.l2);
        if !eval.loss.is_finite() {
            return Err(Error::Numeric(format!("training diverged at epoch {epoch}: loss is not finite")));
        }
        if eval.accuracy >= cfg.early_stop_at_train_accuracy {
            break;
        }
        for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(&eval.gradients.layers) {
            let (w, b) = layer.params_mut();
            for (p, g) in w.iter_mut().zip(gw) {
                *p -= cfg.learning_rate * g;
            }
            for (p, g) in b.iter_mut().zip(gb) {
                *p -= cfg.learning_rate * g;
            }
        }
        if net.layers().iter().any(|l| l.weights().iter().chain(l.bias()).any(|v| !v.is_finite())) {
            return Err(Error::Numeric(format!(
                "training diverged at epoch {epoch}: non-finite parameters"
            )));
        }
        epochs_run = epoch + 1;
    }
    let final_eval = loss_and_gradients(&net, train, cfg.l2);
    if !final_eval.loss.is_finite() {
        return Err(Error::Numeric(format!(
            "training diverged at epoch {epochs_run}: loss is not finite"
        )));
    }
    Ok(net
        .with_meta("seed", cfg.seed.to_string())
        .with_meta("dataset_fingerprint", train.fingerprint())
        .with_meta("epochs_run", epochs_run.to_string())
        .with_meta("hidden_width", cfg.hidden_width.to_string())
        .with_meta("learning_rate", cfg.learning_rate.to_string())
        .with_meta("l2", cfg.l2.to_string())
        .with_meta("train_accuracy", final_eval.accuracy.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub seed: u64,
    pub network: Network,
    /// Agreement with the rows the network was trained on.
    pub train_summary: ValidationSummary,
}

/// Networks trained from one dataset and config, one per seed, in seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub runs: Vec<Run>,
    pub dataset_fingerprint: String,
    pub config: TrainConfig,
}

impl RunSet {
    pub fn networks(&self) -> impl Iterator<Item = &Network> {
        self.runs.iter().map(|r| &r.network)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    /// Wraps already-trained networks (e.g. loaded from disk).
    pub fn from_networks(
        networks: Vec<(u64, Network)>,
        train: &Dataset,
        config: TrainConfig,
    ) -> Result<Self> {
        let runs = networks
            .into_iter()
            .map(|(seed, network)| {
                let train_summary = validate_model(&network, train)?;
                Ok(Run { seed, network, train_summary })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            runs,
            dataset_fingerprint: train.fingerprint(),
            config,
        })
    }
}

pub fn check_distinct_seeds(seeds: &[u64]) -> Result<()> {
    let mut seen = BTreeSet::new();
    match seeds.iter().find(|s| !seen.insert(**s)) {
        Some(dup) => Err(Error::Config(format!("seed {dup} listed twice"))),
        None => Ok(()),
    }
}

/// Trains one network per seed (in parallel); the result is ordered like `seeds`.
pub fn train_runs(train: &Dataset, cfg: &TrainConfig, seeds: &[u64]) -> Result<RunSet> {
    check_distinct_seeds(seeds)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let network = train_one(train, &TrainConfig { seed, ..*cfg })?;
            let train_summary = validate_model(&network, train)?;
            Ok(Run { seed, network, train_summary })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSet {
        runs,
        dataset_fingerprint: train.fingerprint(),
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize_apply, normalize_fit, synth_longtail, SynthConfig};

    fn separable() -> Dataset {
        let raw = synth_longtail(&SynthConfig {
            n_features: 2,
            class_gap: 10.0,
            ..Default::default()
        })
        .unwrap();
        normalize_apply(&normalize_fit(&raw).unwrap(), &raw).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let d = separable();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 25, seed: 4, ..Default::default() };
        let net = train_one(&d, &cfg).unwrap();
        let init = init_network(2, 10, 2, 4).unwrap();
        assert_eq!(net.layers(), init.layers());
    }

    #[test]
    fn deterministic_bytes() {
        let d = separable();
        let cfg = TrainConfig { seed: 11, ..Default::default() };
        assert_eq!(
            train_one(&d, &cfg).unwrap().to_json(),
            train_one(&d, &cfg).unwrap().to_json()
        );
    }

    #[test]
    fn meta_carries_seed_and_fingerprint() {
        let d = separable();
        let net = train_one(&d, &TrainConfig { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(net.meta["seed"], "3");
        assert_eq!(net.meta["dataset_fingerprint"], d.fingerprint());
    }

    #[test]
    fn bad_config_rejected() {
        let d = separable();
        for cfg in [
            TrainConfig { hidden_width: 0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { early_stop_at_train_accuracy: 0.0, ..Default::default() },
            TrainConfig { l2: -1.0, ..Default::default() },
        ] {
            assert!(matches!(train_one(&d, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn divergence_names_epoch() {
        let d = separable();
        let cfg = TrainConfig { learning_rate: 1e300, early_stop_at_train_accuracy: 1.0, ..Default::default() };
        match train_one(&d, &cfg) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("epoch"), "{msg}"),
            Ok(net) => {
                // A lucky initialization may already separate the data.
                assert_eq!(net.meta["epochs_run"], "0");
            }
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn runs_follow_seed_order() {
        let d = separable();
        let rs = train_runs(&d, &TrainConfig::default(), &[5, 1, 3]).unwrap();
        assert_eq!(rs.seeds(), vec![5, 1, 3]);
        assert!(rs.runs.iter().all(|r| r.network.meta["dataset_fingerprint"] == rs.dataset_fingerprint));
        assert!(train_runs(&d, &TrainConfig::default(), &[]).unwrap().runs.is_empty());
        assert!(train_runs(&d, &TrainConfig::default(), &[1, 1]).is_err());
    }
}
