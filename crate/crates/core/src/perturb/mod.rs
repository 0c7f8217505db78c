//! Exact (and sampled) probabilities that a network's classification survives
//! discretized input noise.
//!
//! A [`NoiseSweep`] fixes a step `δ`, a maximum level `M` and a polarity. At
//! level `t` a single node may be shifted by any offset `j·δ` with
//! `1 ≤ |j| ≤ t` (only `j > 0` for positive polarity, only `j < 0` for
//! negative). Offsets are uniform over that grid, so the probability that
//! the label is preserved is the exact ratio `preserved / total`. For
//! all-node noise the joint grid is the Cartesian product of the per-node
//! grids; when it exceeds the exhaustive budget the engine falls back to
//! seeded Monte-Carlo sampling and reports a Wilson interval.
//!
//! Grids are nested, so one enumeration of the level-`t` grid yields the
//! counts of every level `≤ t`: a joint offset belongs to level
//! `max_i |j_i|` and every level above it.

mod dtmc;

pub use dtmc::{export_dtmc, parse_dtmc, parse_props, render_dtmc, DtmcModel};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Network;
use crate::rng::{text_key, SplitMix64};

pub const DEFAULT_BUDGET: u64 = 1_000_000;
pub const DEFAULT_MC_SAMPLES: u64 = 10_000;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Symmetric,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Symmetric => "symmetric",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "symmetric" => Ok(Polarity::Symmetric),
            other => Err(Error::Config(format!("unknown polarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    AllNodes,
    SingleNode(usize),
}

impl Target {
    pub fn label(self) -> String {
        match self {
            Target::AllNodes => "all".to_string(),
            Target::SingleNode(i) => format!("node_{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub step: f64,
    pub max_level: u32,
    pub polarity: Polarity,
    pub target: Target,
}

/// The value of offset multiplier `j`: `j · step`. Every component of the
/// engine (and its tests) derives offsets through this one expression.
#[inline]
pub fn offset(j: i64, step: f64) -> f64 {
    j as f64 * step
}

impl NoiseSweep {
    pub fn new(step: f64, max_level: u32, polarity: Polarity, target: Target) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("noise step must be positive, got {step}")));
        }
        if max_level == 0 {
            return Err(Error::Config("max_level must be at least 1".into()));
        }
        Ok(Self {
            step,
            max_level,
            polarity,
            target,
        })
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level == 0 || level > self.max_level {
            return Err(Error::Config(format!(
                "noise level {level} outside 1..={}",
                self.max_level
            )));
        }
        Ok(())
    }

    /// Offset multipliers admitted at `level`, ascending.
    pub fn multipliers(&self, level: u32) -> Result<Vec<i64>> {
        self.check_level(level)?;
        Ok(multipliers(self.polarity, level))
    }

    /// Number of offsets per node at `level`.
    pub fn grid_size(&self, level: u32) -> u64 {
        match self.polarity {
            Polarity::Symmetric => 2 * u64::from(level),
            _ => u64::from(level),
        }
    }

    /// Joint grid size over `nodes` nodes, `None` on overflow.
    pub fn joint_size(&self, level: u32, nodes: usize) -> Option<u64> {
        self.grid_size(level).checked_pow(u32::try_from(nodes).ok()?)
    }

    /// Noise magnitude of a level: `level · step`.
    pub fn magnitude(&self, level: u32) -> f64 {
        f64::from(level) * self.step
    }
}

fn multipliers(polarity: Polarity, level: u32) -> Vec<i64> {
    let t = i64::from(level);
    match polarity {
        Polarity::Positive => (1..=t).collect(),
        Polarity::Negative => (-t..=-1).collect(),
        Polarity::Symmetric => (-t..=-1).chain(1..=t).collect(),
    }
}

/// Offsets admitted at `level`, ascending; offset 0 never occurs.
pub fn grid(sweep: &NoiseSweep, level: u32) -> Result<Vec<f64>> {
    Ok(sweep
        .multipliers(level)?
        .into_iter()
        .map(|j| offset(j, sweep.step))
        .collect())
}

/// Exact count of noisy variants that keep the seed's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreservationCount {
    pub preserved: u64,
    pub total: u64,
}

impl PreservationCount {
    pub fn new(preserved: u64, total: u64) -> Self {
        assert!(total > 0 && preserved <= total, "invalid count {preserved}/{total}");
        Self { preserved, total }
    }

    pub fn probability(&self) -> f64 {
        self.preserved as f64 / self.total as f64
    }

    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.preserved, self.total)
    }

    pub fn is_complete(&self) -> bool {
        self.preserved == self.total
    }
}

/// A test input used as the center of a noise analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedInput {
    pub id: String,
    /// Normalized features.
    pub x: Vec<f64>,
    pub class_label: usize,
    pub correctly_classified: bool,
}

impl SeedInput {
    /// Classifies `x` with `net` and records whether it matches `class_label`.
    pub fn new(net: &Network, id: impl Into<String>, x: Vec<f64>, class_label: usize) -> Result<Self> {
        let pred = net.forward(&x)?;
        Ok(Self {
            id: id.into(),
            x,
            class_label,
            correctly_classified: pred.label == class_label,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonInterval {
    pub lower: f64,
    pub upper: f64,
}

impl WilsonInterval {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> WilsonInterval {
    assert!(trials > 0, "wilson interval of zero trials");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The bounds are exactly 0 and 1 at the extremes; float rounding would
    // otherwise put them a few ulps inside.
    WilsonInterval {
        lower: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
        upper: if successes == trials { 1.0 } else { (center + half).min(1.0) },
    }
}

/// Outcome of an all-node query at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllNodesOutcome {
    pub count: PreservationCount,
    pub method: Method,
    /// Wilson 95% interval, present for sampled results.
    pub interval: Option<WilsonInterval>,
}

/// Exhaustive budget and Monte-Carlo fallback settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Largest joint grid that is enumerated exhaustively.
    pub budget: u64,
    pub mc_samples: u64,
    pub mc_seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            mc_samples: DEFAULT_MC_SAMPLES,
            mc_seed: 0,
        }
    }
}

impl EngineConfig {
    fn check(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::Config("exhaustive budget must be at least 1".into()));
        }
        if self.mc_samples < 1 {
            return Err(Error::Config("mc_samples must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_seed(net: &Network, seed: &SeedInput) -> Result<()> {
    if seed.x.len() != net.input_dim() {
        return Err(Error::Structure(format!(
            "seed {} has {} features, network expects {}",
            seed.id,
            seed.x.len(),
            net.input_dim()
        )));
    }
    if !seed.correctly_classified {
        return Err(Error::Input(format!(
            "seed {} is misclassified and cannot anchor a preservation query",
            seed.id
        )));
    }
    Ok(())
}

fn check_node(net: &Network, node: usize) -> Result<()> {
    if node >= net.input_dim() {
        return Err(Error::Structure(format!(
            "node index {node} out of range for {} inputs",
            net.input_dim()
        )));
    }
    Ok(())
}

/// Counts per level `1..=levels` from counts bucketed by the level at which
/// each offset first appears.
fn cumulate(bucket_preserved: &[u64], bucket_total: &[u64], levels: u32) -> Vec<PreservationCount> {
    let mut out = Vec::with_capacity(levels as usize);
    let (mut p, mut t) = (0, 0);
    for level in 1..=levels as usize {
        p += bucket_preserved[level];
        t += bucket_total[level];
        out.push(PreservationCount::new(p, t));
    }
    out
}

/// Single-node counts for every level `1..=sweep.max_level`.
pub fn preserve_single_node_levels(
    net: &Network,
    seed: &SeedInput,
    node: usize,
    sweep: &NoiseSweep,
) -> Result<Vec<PreservationCount>> {
    check_seed(net, seed)?;
    check_node(net, node)?;
    let top = sweep.max_level;
    let mut eval = net.evaluator();
    let base = eval.label(&seed.x);
    let mut x = seed.x.clone();
    let mut preserved = vec![0u64; top as usize + 1];
    let mut total = vec![0u64; top as usize + 1];
    for j in multipliers(sweep.polarity, top) {
        x[node] = seed.x[node] + offset(j, sweep.step);
        let level = j.unsigned_abs() as usize;
        total[level] += 1;
        if eval.label(&x) == base {
            preserved[level] += 1;
        }
    }
    Ok(cumulate(&preserved, &total, top))
}

/// Counts offsets `η` in the level grid for which shifting node `node` of the
/// seed by `η` keeps its label. Exact enumeration.
pub fn preserve_single_node(
    net: &Network,
    seed: &SeedInput,
    node: usize,
    sweep: &NoiseSweep,
    level: u32,
) -> Result<PreservationCount> {
    sweep.check_level(level)?;
    let capped = NoiseSweep { max_level: level, ..*sweep };
    Ok(*preserve_single_node_levels(net, seed, node, &capped)?
        .last()
        .expect("at least one level"))
}

/// Depth-first walk of a joint offset grid that caches the first layer's
/// partial weighted sums per depth. The sums accumulate in column order
/// from 0.0, exactly as a plain forward pass does, so every label matches
/// `Network::forward` bit for bit.
struct JointWalker<'a> {
    eval: crate::model::Evaluator<'a>,
    x: &'a [f64],
    mults: &'a [i64],
    step: f64,
    /// `partial[k][r]`: sum over columns `< k` of `w[r][c] * x'[c]`.
    partial: Vec<Vec<f64>>,
    base: usize,
    preserved: Vec<u64>,
    total: Vec<u64>,
}

impl<'a> JointWalker<'a> {
    fn new(net: &'a Network, x: &'a [f64], mults: &'a [i64], step: f64, base: usize, top: u32) -> Self {
        let hidden = net.layers()[0].out_dim();
        Self {
            eval: net.evaluator(),
            x,
            mults,
            step,
            partial: vec![vec![0.0; hidden]; x.len() + 1],
            base,
            preserved: vec![0; top as usize + 1],
            total: vec![0; top as usize + 1],
        }
    }

    fn set_column(&mut self, k: usize, j: i64) {
        let first = &self.eval.network().layers()[0];
        let v = self.x[k] + offset(j, self.step);
        let (head, tail) = self.partial.split_at_mut(k + 1);
        for (r, (next, prev)) in tail[0].iter_mut().zip(&head[k]).enumerate() {
            *next = prev + first.weight(r, k) * v;
        }
    }

    fn walk(&mut self, k: usize, level: usize) {
        if k == self.x.len() {
            let label = self.eval.label_from_first_sums(&self.partial[k]);
            self.total[level] += 1;
            if label == self.base {
                self.preserved[level] += 1;
            }
            return;
        }
        for idx in 0..self.mults.len() {
            let j = self.mults[idx];
            self.set_column(k, j);
            self.walk(k + 1, level.max(j.unsigned_abs() as usize));
        }
    }
}

/// Exhaustive joint enumeration at `top`, bucketed per level, partitioned
/// across workers by the first node's offset.
fn enumerate_joint(net: &Network, x: &[f64], sweep: &NoiseSweep, top: u32) -> Vec<PreservationCount> {
    let mults = multipliers(sweep.polarity, top);
    let base = net.classify(x);
    let parts: Vec<(Vec<u64>, Vec<u64>)> = mults
        .par_iter()
        .map(|&j0| {
            let mut w = JointWalker::new(net, x, &mults, sweep.step, base, top);
            w.set_column(0, j0);
            w.walk(1, j0.unsigned_abs() as usize);
            (w.preserved, w.total)
        })
        .collect();
    let mut preserved = vec![0u64; top as usize + 1];
    let mut total = vec![0u64; top as usize + 1];
    for (p, t) in parts {
        for l in 0..=top as usize {
            preserved[l] += p[l];
            total[l] += t[l];
        }
    }
    cumulate(&preserved, &total, top)
}

fn sample_joint(net: &Network, seed: &SeedInput, sweep: &NoiseSweep, level: u32, engine: &EngineConfig) -> AllNodesOutcome {
    let mults = multipliers(sweep.polarity, level);
    let mut rng = SplitMix64::derived(engine.mc_seed, &[text_key(&seed.id), u64::from(level)]);
    let mut eval = net.evaluator();
    let base = eval.label(&seed.x);
    let mut x = seed.x.clone();
    let mut preserved = 0;
    for _ in 0..engine.mc_samples {
        for (xi, &ci) in x.iter_mut().zip(&seed.x) {
            let j = mults[rng.below(mults.len() as u64) as usize];
            *xi = ci + offset(j, sweep.step);
        }
        if eval.label(&x) == base {
            preserved += 1;
        }
    }
    AllNodesOutcome {
        count: PreservationCount::new(preserved, engine.mc_samples),
        method: Method::MonteCarlo,
        interval: Some(wilson_interval(preserved, engine.mc_samples, Z_95)),
    }
}

/// Largest level whose joint grid fits the budget (0 if none does).
fn exact_ceiling(sweep: &NoiseSweep, nodes: usize, budget: u64) -> u32 {
    (1..=sweep.max_level)
        .take_while(|&t| sweep.joint_size(t, nodes).is_some_and(|s| s <= budget))
        .last()
        .unwrap_or(0)
}

/// All-node outcomes for every level `1..=sweep.max_level`: exact up to the
/// largest level within budget, sampled above it.
pub fn preserve_all_nodes_levels(
    net: &Network,
    seed: &SeedInput,
    sweep: &NoiseSweep,
    engine: &EngineConfig,
) -> Result<Vec<AllNodesOutcome>> {
    if sweep.target != Target::AllNodes {
        return Err(Error::Config("all-node query needs an AllNodes sweep".into()));
    }
    engine.check()?;
    check_seed(net, seed)?;
    let ceiling = exact_ceiling(sweep, net.input_dim(), engine.budget);
    let mut out: Vec<AllNodesOutcome> = if ceiling > 0 {
        enumerate_joint(net, &seed.x, sweep, ceiling)
            .into_iter()
            .map(|count| AllNodesOutcome {
                count,
                method: Method::Exact,
                interval: None,
            })
            .collect()
    } else {
        Vec::new()
    };
    for level in ceiling + 1..=sweep.max_level {
        out.push(sample_joint(net, seed, sweep, level, engine));
    }
    Ok(out)
}

/// Probability that the label survives noise on every node at once. Exact
/// when the joint grid fits `engine.budget`, Monte-Carlo otherwise.
pub fn preserve_all_nodes(
    net: &Network,
    seed: &SeedInput,
    sweep: &NoiseSweep,
    level: u32,
    engine: &EngineConfig,
) -> Result<AllNodesOutcome> {
    sweep.check_level(level)?;
    let capped = NoiseSweep { max_level: level, ..*sweep };
    Ok(*preserve_all_nodes_levels(net, seed, &capped, engine)?
        .last()
        .expect("at least one level"))
}

/// Exact preservation count for the sweep's target at one level; refuses to
/// sample when the joint grid exceeds `budget`.
pub fn exact_count(
    net: &Network,
    seed: &SeedInput,
    sweep: &NoiseSweep,
    level: u32,
    budget: u64,
) -> Result<PreservationCount> {
    sweep.check_level(level)?;
    match sweep.target {
        Target::SingleNode(i) => preserve_single_node(net, seed, i, sweep, level),
        Target::AllNodes => {
            if budget < 1 {
                return Err(Error::Config("exhaustive budget must be at least 1".into()));
            }
            check_seed(net, seed)?;
            match sweep.joint_size(level, net.input_dim()) {
                Some(size) if size <= budget => {}
                size => {
                    return Err(Error::Infeasible(format!(
                        "joint grid of {} points at level {level} exceeds budget {budget}",
                        size.map_or_else(|| "more than 2^64".to_string(), |s| s.to_string())
                    )))
                }
            }
            Ok(*enumerate_joint(net, &seed.x, sweep, level).last().expect("level >= 1"))
        }
    }
}

/// True iff every offset in the level grid keeps the seed's label.
pub fn worst_case_robust(
    net: &Network,
    seed: &SeedInput,
    sweep: &NoiseSweep,
    level: u32,
    budget: u64,
) -> Result<bool> {
    Ok(exact_count(net, seed, sweep, level, budget)?.is_complete())
}
