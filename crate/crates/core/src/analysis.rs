//! Aggregation of preservation counts into class-wise robustness curves,
//! per-node sensitivity curves, bias scores, the training-variance table and
//! complete-vs-truncated regime comparisons.
//!
//! Curve points average in two layers: first the per-seed exact ratios of
//! one network's class, then those per-network means across networks. Both
//! layers are exact rationals; floats are derived from them for display.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{class_stats, Dataset};
use crate::error::{Error, Result};
use crate::model::{validate_model, Network, ValidationSummary};
use crate::perturb::{
    preserve_all_nodes_levels, preserve_single_node_levels, EngineConfig, Method, NoiseSweep,
    Polarity, PreservationCount, SeedInput, Target,
};
use crate::train::RunSet;

/// Default exhaustive budget of a report sweep: keeps a five-node symmetric
/// sweep to level 10 (20^5 = 3.2M joint offsets) exact.
pub const SWEEP_BUDGET: u64 = 4_000_000;

/// Sweep parameters shared by every curve of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Noise step δ in normalized feature units.
    pub step: f64,
    pub max_level: u32,
    /// Polarity of the all-node (class robustness) sweep.
    pub class_polarity: Polarity,
    /// Polarities of the per-node sweeps.
    pub node_polarities: Vec<Polarity>,
    pub budget: u64,
    pub mc_samples: u64,
    pub mc_seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            step: 0.05,
            max_level: 10,
            class_polarity: Polarity::Symmetric,
            node_polarities: vec![Polarity::Negative, Polarity::Positive],
            budget: SWEEP_BUDGET,
            mc_samples: crate::perturb::DEFAULT_MC_SAMPLES,
            mc_seed: 0,
        }
    }
}

impl SweepSettings {
    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            budget: self.budget,
            mc_samples: self.mc_samples,
            mc_seed: self.mc_seed,
        }
    }

    pub fn class_sweep(&self) -> Result<NoiseSweep> {
        NoiseSweep::new(self.step, self.max_level, self.class_polarity, Target::AllNodes)
    }

    pub fn check(&self) -> Result<()> {
        self.class_sweep()?;
        if self.budget < 1 || self.mc_samples < 1 {
            return Err(Error::Config("budget and mc_samples must be at least 1".into()));
        }
        if let Some(p) = self.node_polarities.iter().find(|p| **p == Polarity::Symmetric) {
            return Err(Error::Config(format!(
                "node sweeps take positive or negative polarity, got {}",
                p.as_str()
            )));
        }
        Ok(())
    }
}

/// Exact ratio `num / den` as a float.
pub fn ratio_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn count_ratio(c: &PreservationCount) -> BigRational {
    BigRational::new(BigInt::from(c.preserved), BigInt::from(c.total))
}

fn mean(values: &[BigRational]) -> Option<BigRational> {
    if values.is_empty() {
        return None;
    }
    let sum: BigRational = values.iter().cloned().sum();
    Some(sum / BigInt::from(values.len()))
}

/// One seed input's counts for every level of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedLevels {
    pub id: String,
    pub class: usize,
    pub counts: Vec<(PreservationCount, Method)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPoint {
    /// Absent when no contributing seed exists for this class.
    pub exact: Option<BigRational>,
    pub probability: Option<f64>,
    /// Seeds behind the value (summed over networks for averaged curves).
    pub seed_count: usize,
    /// Networks behind the value (1 for a single network's curve).
    pub network_count: usize,
}

impl ClassPoint {
    fn new(exact: Option<BigRational>, seed_count: usize, network_count: usize) -> Self {
        Self {
            probability: exact.as_ref().map(ratio_f64),
            exact,
            seed_count,
            network_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub level: u32,
    pub magnitude: f64,
    /// Exact unless any contributing count was sampled.
    pub method: Method,
    pub classes: Vec<ClassPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve {
    pub target: Target,
    pub polarity: Polarity,
    pub step: f64,
    pub points: Vec<CurvePoint>,
}

impl SensitivityCurve {
    pub fn class_count(&self) -> usize {
        self.points.first().map_or(0, |p| p.classes.len())
    }
}

/// A single network's curve plus the per-seed counts it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCurve {
    pub network_seed: u64,
    pub curve: SensitivityCurve,
    pub seeds: Vec<SeedLevels>,
    /// Test rows the network misclassifies; they anchor no counts.
    pub excluded: Vec<String>,
}

/// The cross-network average together with the per-network curves behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBundle {
    pub averaged: SensitivityCurve,
    pub per_network: Vec<NetworkCurve>,
}

/// Correctly classified test rows become seeds; the rest are returned by id.
pub fn seed_inputs(net: &Network, test: &Dataset) -> Result<(Vec<SeedInput>, Vec<String>)> {
    let mut seeds = Vec::new();
    let mut excluded = Vec::new();
    for row in test.rows() {
        let s = SeedInput::new(net, row.id.clone(), row.features.clone(), row.label)?;
        if s.correctly_classified {
            seeds.push(s);
        } else {
            excluded.push(row.id.clone());
        }
    }
    Ok((seeds, excluded))
}

fn network_curve_from_seeds(
    network_seed: u64,
    sweep: &NoiseSweep,
    classes: usize,
    seeds: Vec<SeedLevels>,
    excluded: Vec<String>,
) -> NetworkCurve {
    let points = (1..=sweep.max_level)
        .map(|level| {
            let idx = level as usize - 1;
            let mut method = Method::Exact;
            let classes = (0..classes)
                .map(|c| {
                    let ratios: Vec<BigRational> = seeds
                        .iter()
                        .filter(|s| s.class == c)
                        .map(|s| {
                            let (count, m) = &s.counts[idx];
                            if *m == Method::MonteCarlo {
                                method = Method::MonteCarlo;
                            }
                            count_ratio(count)
                        })
                        .collect();
                    let n = ratios.len();
                    ClassPoint::new(mean(&ratios), n, usize::from(n > 0))
                })
                .collect();
            CurvePoint {
                level,
                magnitude: sweep.magnitude(level),
                method,
                classes,
            }
        })
        .collect();
    NetworkCurve {
        network_seed,
        curve: SensitivityCurve {
            target: sweep.target,
            polarity: sweep.polarity,
            step: sweep.step,
            points,
        },
        seeds,
        excluded,
    }
}

/// Curve of one network over the correctly classified rows of `test`.
pub fn network_curve(
    net: &Network,
    network_seed: u64,
    test: &Dataset,
    sweep: &NoiseSweep,
    engine: &EngineConfig,
) -> Result<NetworkCurve> {
    let (seeds, excluded) = seed_inputs(net, test)?;
    let levels = seeds
        .par_iter()
        .map(|s| {
            let counts = match sweep.target {
                Target::AllNodes => preserve_all_nodes_levels(net, s, sweep, engine)?
                    .into_iter()
                    .map(|o| (o.count, o.method))
                    .collect(),
                Target::SingleNode(i) => preserve_single_node_levels(net, s, i, sweep)?
                    .into_iter()
                    .map(|c| (c, Method::Exact))
                    .collect(),
            };
            Ok(SeedLevels {
                id: s.id.clone(),
                class: s.class_label,
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(network_curve_from_seeds(
        network_seed,
        sweep,
        test.class_count().max(net.class_count()),
        levels,
        excluded,
    ))
}

/// Mean of per-network class means, over the networks where the class is present.
pub fn average_curves(per_network: &[NetworkCurve]) -> Result<SensitivityCurve> {
    let first = per_network
        .first()
        .ok_or_else(|| Error::Data("no network curves to average".into()))?;
    let template = &first.curve;
    let points = template
        .points
        .iter()
        .enumerate()
        .map(|(pi, tp)| {
            let mut method = Method::Exact;
            let classes = (0..tp.classes.len())
                .map(|c| {
                    let mut values = Vec::new();
                    let mut seeds = 0;
                    for nc in per_network {
                        let p = &nc.curve.points[pi];
                        if p.method == Method::MonteCarlo {
                            method = Method::MonteCarlo;
                        }
                        if let Some(v) = &p.classes[c].exact {
                            values.push(v.clone());
                            seeds += p.classes[c].seed_count;
                        }
                    }
                    ClassPoint::new(mean(&values), seeds, values.len())
                })
                .collect();
            CurvePoint {
                level: tp.level,
                magnitude: tp.magnitude,
                method,
                classes,
            }
        })
        .collect();
    Ok(SensitivityCurve {
        target: template.target,
        polarity: template.polarity,
        step: template.step,
        points,
    })
}

fn bundle(
    runset: &RunSet,
    test: &Dataset,
    sweep: &NoiseSweep,
    engine: &EngineConfig,
) -> Result<CurveBundle> {
    let per_network = runset
        .runs
        .iter()
        .map(|run| network_curve(&run.network, run.seed, test, sweep, engine))
        .collect::<Result<Vec<_>>>()?;
    let averaged = if per_network.is_empty() {
        SensitivityCurve {
            target: sweep.target,
            polarity: sweep.polarity,
            step: sweep.step,
            points: Vec::new(),
        }
    } else {
        average_curves(&per_network)?
    };
    Ok(CurveBundle {
        averaged,
        per_network,
    })
}

/// Class-wise probability of preserved classification under all-node noise.
pub fn class_robustness_curve(
    runset: &RunSet,
    test: &Dataset,
    sweep: &NoiseSweep,
    engine: &EngineConfig,
) -> Result<CurveBundle> {
    if sweep.target != Target::AllNodes {
        return Err(Error::Config("class robustness needs an all-node sweep".into()));
    }
    bundle(runset, test, sweep, engine)
}

/// One curve per input node under single-node noise of one polarity.
pub fn node_sensitivity_curves(
    runset: &RunSet,
    test: &Dataset,
    step: f64,
    max_level: u32,
    polarity: Polarity,
) -> Result<Vec<CurveBundle>> {
    if polarity == Polarity::Symmetric {
        return Err(Error::Config(
            "node sensitivity curves take positive or negative polarity".into(),
        ));
    }
    let engine = EngineConfig::default();
    (0..test.feature_count())
        .map(|i| {
            let sweep = NoiseSweep::new(step, max_level, polarity, Target::SingleNode(i))?;
            bundle(runset, test, &sweep, &engine)
        })
        .collect()
}

/// Largest pairwise class gap of a curve over the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScore {
    pub target: Target,
    pub polarity: Polarity,
    pub score: f64,
    /// Lowest level attaining the score; absent when no level has two classes.
    pub arg_level: Option<u32>,
    /// The class pair attaining the score.
    pub classes: Option<(usize, usize)>,
    /// Sum over levels of the level's largest gap times the step.
    pub gap_area: f64,
}

pub fn bias_score(curve: &SensitivityCurve) -> Result<BiasScore> {
    if curve.class_count() < 2 {
        return Err(Error::Data("bias score needs at least two classes".into()));
    }
    let mut best: Option<(BigRational, u32, (usize, usize))> = None;
    let mut area = 0.0;
    for p in &curve.points {
        let mut level_best = BigRational::zero();
        for a in 0..p.classes.len() {
            for b in a + 1..p.classes.len() {
                let (Some(pa), Some(pb)) = (&p.classes[a].exact, &p.classes[b].exact) else {
                    continue;
                };
                let gap = (pa - pb).abs();
                if gap > level_best {
                    level_best = gap.clone();
                }
                if best.as_ref().is_none_or(|(g, _, _)| gap > *g) {
                    best = Some((gap, p.level, (a, b)));
                }
            }
        }
        area += ratio_f64(&level_best) * curve.step;
    }
    Ok(BiasScore {
        target: curve.target,
        polarity: curve.polarity,
        score: best.as_ref().map_or(0.0, |(g, _, _)| ratio_f64(g)),
        arg_level: best.as_ref().map(|(_, l, _)| *l),
        classes: best.map(|(_, _, c)| c),
        gap_area: area,
    })
}

pub fn bias_scores(curves: &[SensitivityCurve]) -> Result<Vec<BiasScore>> {
    curves.iter().map(bias_score).collect()
}

/// Unbiased per-(node, class) variance of raw training values with the
/// per-class extrema flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    /// `[feature][class]`.
    pub variance: Vec<Vec<Option<f64>>>,
    pub counts: Vec<usize>,
    /// Feature index of the smallest / largest variance per class.
    pub min_feature: Vec<Option<usize>>,
    pub max_feature: Vec<Option<usize>>,
}

impl VarianceTable {
    pub fn is_min(&self, feature: usize, class: usize) -> bool {
        self.min_feature[class] == Some(feature)
    }

    pub fn is_max(&self, feature: usize, class: usize) -> bool {
        self.max_feature[class] == Some(feature)
    }
}

pub fn variance_table(train: &Dataset) -> Result<VarianceTable> {
    if train.class_count() < 2 {
        return Err(Error::SingleClass);
    }
    let counts = train.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!(
            "variance table needs every class; {:?} has no rows",
            train.class_names()[c]
        )));
    }
    let stats = class_stats(train)?;
    let n = train.feature_count();
    let variance: Vec<Vec<Option<f64>>> = (0..n)
        .map(|f| (0..counts.len()).map(|c| stats.get(c, f).variance).collect())
        .collect();
    let extreme = |class: usize, pick_max: bool| {
        let mut best: Option<(usize, f64)> = None;
        for (f, row) in variance.iter().enumerate() {
            if let Some(v) = row[class] {
                let better = match best {
                    None => true,
                    Some((_, b)) => if pick_max { v > b } else { v < b },
                };
                if better {
                    best = Some((f, v));
                }
            }
        }
        best.map(|(f, _)| f)
    };
    let min_feature = (0..counts.len()).map(|c| extreme(c, false)).collect();
    let max_feature = (0..counts.len()).map(|c| extreme(c, true)).collect();
    Ok(VarianceTable {
        feature_names: train.feature_names().to_vec(),
        class_names: train.class_names().to_vec(),
        variance,
        counts,
        min_feature,
        max_feature,
    })
}

/// Everything computed for one training regime.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub regime: String,
    pub dataset_fingerprint: String,
    pub test_fingerprint: String,
    pub settings: SweepSettings,
    pub seeds: Vec<u64>,
    pub validation: Vec<(u64, ValidationSummary)>,
    pub class_curve: CurveBundle,
    /// Grouped by polarity in `settings.node_polarities` order, nodes ascending.
    pub node_curves: Vec<CurveBundle>,
    /// Scores of the averaged curves: class curve first, then node curves.
    pub scores: Vec<BiasScore>,
    /// Per-network scores in the same order, keyed by network seed.
    pub network_scores: Vec<(u64, Vec<BiasScore>)>,
    pub variance: VarianceTable,
}

/// Runs every sweep of `settings` for one regime. `train_raw` feeds the
/// variance table; `test` must already be normalized.
pub fn build_report(
    regime: &str,
    runset: &RunSet,
    train_raw: &Dataset,
    test: &Dataset,
    settings: &SweepSettings,
) -> Result<BiasReport> {
    settings.check()?;
    let engine = settings.engine();
    let class_curve = class_robustness_curve(runset, test, &settings.class_sweep()?, &engine)?;
    let mut node_curves = Vec::new();
    for &pol in &settings.node_polarities {
        node_curves.extend(node_sensitivity_curves(
            runset,
            test,
            settings.step,
            settings.max_level,
            pol,
        )?);
    }
    let mut scores = Vec::new();
    let mut network_scores: Vec<(u64, Vec<BiasScore>)> =
        runset.runs.iter().map(|r| (r.seed, Vec::new())).collect();
    for b in std::iter::once(&class_curve).chain(&node_curves) {
        if !b.per_network.is_empty() {
            scores.push(bias_score(&b.averaged)?);
        }
        for (slot, nc) in network_scores.iter_mut().zip(&b.per_network) {
            slot.1.push(bias_score(&nc.curve)?);
        }
    }
    let validation = runset
        .runs
        .iter()
        .map(|r| Ok((r.seed, validate_model(&r.network, test)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasReport {
        regime: regime.to_string(),
        dataset_fingerprint: runset.dataset_fingerprint.clone(),
        test_fingerprint: test.fingerprint(),
        settings: settings.clone(),
        seeds: runset.seeds(),
        validation,
        class_curve,
        node_curves,
        scores,
        network_scores,
        variance: variance_table(train_raw)?,
    })
}

/// Level-aligned differences between two regimes for one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelComparison {
    pub target: Target,
    pub polarity: Polarity,
    pub level: u32,
    pub magnitude: f64,
    pub full: Vec<Option<f64>>,
    pub truncated: Vec<Option<f64>>,
    /// truncated − full, exact then converted.
    pub delta: Vec<Option<f64>>,
    /// Class with the strictly lowest probability, if unique.
    pub lower_full: Option<usize>,
    pub lower_truncated: Option<usize>,
    /// The lower-probability class differs between the regimes.
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDelta {
    pub target: Target,
    pub polarity: Polarity,
    pub full: f64,
    pub truncated: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeComparison {
    pub levels: Vec<LevelComparison>,
    pub scores: Vec<ScoreDelta>,
}

fn lowest_class(classes: &[ClassPoint]) -> Option<usize> {
    let present: Vec<(usize, &BigRational)> = classes
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.exact.as_ref().map(|v| (i, v)))
        .collect();
    let min = present.iter().map(|(_, v)| *v).min()?;
    let mut at = present.iter().filter(|(_, v)| *v == min);
    let first = at.next()?.0;
    at.next().is_none().then_some(first)
}

pub fn compare_regimes(full: &BiasReport, truncated: &BiasReport) -> Result<RegimeComparison> {
    if full.settings != truncated.settings {
        return Err(Error::Config("regimes were analyzed with different sweep settings".into()));
    }
    if full.test_fingerprint != truncated.test_fingerprint {
        return Err(Error::Config("regimes were analyzed on different test sets".into()));
    }
    let pairs: Vec<(&SensitivityCurve, &SensitivityCurve)> =
        std::iter::once((&full.class_curve.averaged, &truncated.class_curve.averaged))
            .chain(
                full.node_curves
                    .iter()
                    .zip(&truncated.node_curves)
                    .map(|(a, b)| (&a.averaged, &b.averaged)),
            )
            .collect();
    if full.node_curves.len() != truncated.node_curves.len() {
        return Err(Error::Config("regimes have different node curve sets".into()));
    }
    let mut levels = Vec::new();
    for (a, b) in &pairs {
        if a.target != b.target || a.polarity != b.polarity || a.points.len() != b.points.len() {
            return Err(Error::Config("regime curves are not aligned".into()));
        }
        for (pa, pb) in a.points.iter().zip(&b.points) {
            let delta = pa
                .classes
                .iter()
                .zip(&pb.classes)
                .map(|(x, y)| match (&x.exact, &y.exact) {
                    (Some(x), Some(y)) => Some(ratio_f64(&(y - x))),
                    _ => None,
                })
                .collect();
            let lower_full = lowest_class(&pa.classes);
            let lower_truncated = lowest_class(&pb.classes);
            levels.push(LevelComparison {
                target: a.target,
                polarity: a.polarity,
                level: pa.level,
                magnitude: pa.magnitude,
                full: pa.classes.iter().map(|c| c.probability).collect(),
                truncated: pb.classes.iter().map(|c| c.probability).collect(),
                delta,
                lower_full,
                lower_truncated,
                flipped: matches!((lower_full, lower_truncated), (Some(x), Some(y)) if x != y),
            });
        }
    }
    let scores = full
        .scores
        .iter()
        .zip(&truncated.scores)
        .map(|(f, t)| ScoreDelta {
            target: f.target,
            polarity: f.polarity,
            full: f.score,
            truncated: t.score,
            delta: t.score - f.score,
        })
        .collect();
    Ok(RegimeComparison { levels, scores })
}
