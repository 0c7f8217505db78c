//! Feedforward ReLU classifiers: representation, persistence, evaluation and
//! validation against a labeled test set.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Identity => v,
        }
    }
}

/// Dense layer. Weights are row-major: `weights[r * in_dim + c]` multiplies
/// input component `c` into output component `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    in_dim: usize,
    activation: Activation,
}

impl Layer {
    /// Builds a layer from weight rows.
    pub fn new(rows: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let in_dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || in_dim == 0 {
            return Err(Error::Structure("layer has an empty weight matrix".into()));
        }
        if let Some(r) = rows.iter().position(|row| row.len() != in_dim) {
            return Err(Error::Structure(format!(
                "weight row {r} has {} columns, expected {in_dim}",
                rows[r].len()
            )));
        }
        Self::from_flat(rows.concat(), bias, in_dim, activation)
    }

    pub fn from_flat(
        weights: Vec<f64>,
        bias: Vec<f64>,
        in_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || weights.is_empty() || !weights.len().is_multiple_of(in_dim) {
            return Err(Error::Structure(format!(
                "{} weights do not form rows of width {in_dim}",
                weights.len()
            )));
        }
        let out_dim = weights.len() / in_dim;
        if bias.len() != out_dim {
            return Err(Error::Structure(format!(
                "bias length {} differs from weight row count {out_dim}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Structure("non-finite layer parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            in_dim,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.in_dim..(row + 1) * self.in_dim]
    }

    /// Affine map followed by the activation. Each output accumulates its
    /// weighted inputs left to right from 0.0 and adds the bias last.
    #[inline]
    pub(crate) fn eval_into(&self, input: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *o = self.activation.apply(acc + self.bias[r]);
        }
    }

    /// Activation applied to precomputed weighted sums plus bias.
    #[inline]
    pub(crate) fn finish_into(&self, sums: &[f64], out: &mut [f64]) {
        for ((o, s), b) in out.iter_mut().zip(sums).zip(&self.bias) {
            *o = self.activation.apply(s + b);
        }
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub label: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Layered affine+ReLU classifier with an argmax readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
    class_count: usize,
    pub meta: BTreeMap<String, String>,
}

impl Network {
    /// Checks the chain of layer dimensions, the activation layout (ReLU
    /// hidden layers, identity readout) and that there are at least two classes.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Structure("network has no layers".into()))?;
        let input_dim = first.in_dim();
        for k in 1..layers.len() {
            if layers[k].in_dim() != layers[k - 1].out_dim() {
                return Err(Error::Structure(format!(
                    "layer {k} expects {} inputs but layer {} produces {}",
                    layers[k].in_dim(),
                    k - 1,
                    layers[k - 1].out_dim()
                )));
            }
        }
        let last = layers.len() - 1;
        for (k, layer) in layers.iter().enumerate() {
            let expected = if k == last {
                Activation::Identity
            } else {
                Activation::Relu
            };
            if layer.activation() != expected {
                return Err(Error::Structure(format!(
                    "layer {k} must use {} activation",
                    expected.as_str()
                )));
            }
        }
        let class_count = layers[last].out_dim();
        if class_count < 2 {
            return Err(Error::Structure(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        Ok(Self {
            layers,
            input_dim,
            class_count,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.input_dim {
            return Err(Error::Structure(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("input component {i} is not finite")));
        }
        let mut eval = Evaluator::new(self);
        let logits = eval.logits(x).to_vec();
        let label = argmax(&logits);
        Ok(Prediction { logits, label })
    }

    /// Label only, without shape checks. Panics on a wrong input length.
    pub fn classify(&self, x: &[f64]) -> usize {
        Evaluator::new(self).label(x)
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator::new(self)
    }
}

/// Reusable scratch buffers for repeated forward passes over one network.
pub struct Evaluator<'a> {
    net: &'a Network,
    bufs: [Vec<f64>; 2],
}

impl<'a> Evaluator<'a> {
    pub fn new(net: &'a Network) -> Self {
        let width = net.layers.iter().map(Layer::out_dim).max().unwrap_or(0);
        Self {
            net,
            bufs: [vec![0.0; width], vec![0.0; width]],
        }
    }

    pub fn network(&self) -> &'a Network {
        self.net
    }

    pub fn logits(&mut self, x: &[f64]) -> &[f64] {
        assert_eq!(x.len(), self.net.input_dim, "input dimension");
        let first = &self.net.layers[0];
        first.eval_into(x, &mut self.bufs[0][..first.out_dim()]);
        let n = self.run_tail(1, first.out_dim());
        &self.bufs[(self.net.layers.len() - 1) % 2][..n]
    }

    pub fn label(&mut self, x: &[f64]) -> usize {
        argmax(self.logits(x))
    }

    /// Completes a pass given the weighted sums of the first layer (without
    /// bias). Used by the enumeration engine, which caches those sums.
    pub(crate) fn label_from_first_sums(&mut self, sums: &[f64]) -> usize {
        let first = &self.net.layers[0];
        first.finish_into(sums, &mut self.bufs[0][..first.out_dim()]);
        let n = self.run_tail(1, first.out_dim());
        argmax(&self.bufs[(self.net.layers.len() - 1) % 2][..n])
    }

    /// Runs layers `start..` with the activations of layer `start - 1` in
    /// buffer `(start - 1) % 2`. Returns the final output width.
    fn run_tail(&mut self, start: usize, mut width: usize) -> usize {
        for k in start..self.net.layers.len() {
            let layer = &self.net.layers[k];
            let (src, dst) = if k % 2 == 1 {
                let [a, b] = &mut self.bufs;
                (&*a, b)
            } else {
                let [a, b] = &mut self.bufs;
                (&*b, a)
            };
            layer.eval_into(&src[..width], &mut dst[..layer.out_dim()]);
            width = layer.out_dim();
        }
        width
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    input_dim: usize,
    class_count: usize,
    layers: Vec<LayerFile>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

fn load_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::ModelLoad {
        field: field.into(),
        message: message.into(),
    }
}

impl Network {
    /// Serializes to the JSON model schema.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            input_dim: self.input_dim,
            class_count: self.class_count,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.chunks(l.in_dim).map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                    activation: l.activation.as_str().to_string(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| load_err("<document>", e.to_string()))?;
        if file.layers.is_empty() {
            return Err(load_err("layers", "no layers"));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        let mut expected_in = file.input_dim;
        for (k, lf) in file.layers.into_iter().enumerate() {
            let activation = match lf.activation.as_str() {
                "relu" => Activation::Relu,
                "identity" => Activation::Identity,
                other => {
                    return Err(Error::UnsupportedActivation {
                        layer: k,
                        tag: other.to_string(),
                    })
                }
            };
            if lf.weights.is_empty() {
                return Err(load_err(format!("layers[{k}].weights"), "empty matrix"));
            }
            for (r, row) in lf.weights.iter().enumerate() {
                if row.len() != expected_in {
                    return Err(load_err(
                        format!("layers[{k}].weights[{r}]"),
                        format!("has {} columns, expected {expected_in}", row.len()),
                    ));
                }
                if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                    return Err(load_err(format!("layers[{k}].weights[{r}][{c}]"), "not finite"));
                }
            }
            if lf.bias.len() != lf.weights.len() {
                return Err(load_err(
                    format!("layers[{k}].bias"),
                    format!(
                        "length {} differs from weight row count {}",
                        lf.bias.len(),
                        lf.weights.len()
                    ),
                ));
            }
            if let Some(i) = lf.bias.iter().position(|v| !v.is_finite()) {
                return Err(load_err(format!("layers[{k}].bias[{i}]"), "not finite"));
            }
            expected_in = lf.weights.len();
            let layer = Layer::new(lf.weights, lf.bias, activation)
                .map_err(|e| load_err(format!("layers[{k}]"), e.to_string()))?;
            layers.push(layer);
        }
        if expected_in != file.class_count {
            return Err(load_err(
                "class_count",
                format!("final layer has {expected_in} outputs, file declares {}", file.class_count),
            ));
        }
        let mut net = Network::new(layers).map_err(|e| load_err("layers", e.to_string()))?;
        net.meta = file.meta;
        Ok(net)
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Network::from_json(&text)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, net.to_json()).map_err(|e| Error::io(path, e))
}

/// Agreement between a network and a labeled test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Per class: rows of that class and how many were classified correctly.
    pub class_rows: Vec<usize>,
    pub class_correct: Vec<usize>,
    /// `None` for a class with no test rows.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub misclassified: Vec<String>,
}

pub fn validate_model(net: &Network, test: &Dataset) -> Result<ValidationSummary> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    if test.feature_count() != net.input_dim() {
        return Err(Error::Structure(format!(
            "test set has {} features, network expects {}",
            test.feature_count(),
            net.input_dim()
        )));
    }
    let classes = test.class_count().max(net.class_count());
    let mut class_rows = vec![0; classes];
    let mut class_correct = vec![0; classes];
    let mut misclassified = Vec::new();
    let mut eval = net.evaluator();
    for row in test.rows() {
        class_rows[row.label] += 1;
        if eval.label(&row.features) == row.label {
            class_correct[row.label] += 1;
        } else {
            misclassified.push(row.id.clone());
        }
    }
    let correct: usize = class_correct.iter().sum();
    let total = test.len();
    Ok(ValidationSummary {
        accuracy: correct as f64 / total as f64,
        correct,
        total,
        per_class_accuracy: class_rows
            .iter()
            .zip(&class_correct)
            .map(|(&n, &c)| (n > 0).then(|| c as f64 / n as f64))
            .collect(),
        class_rows,
        class_correct,
        misclassified,
    })
}
